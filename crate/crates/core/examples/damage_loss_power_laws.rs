//! Total damage and repair loss over a (Vm, Rm) sweep, with their fitted
//! power laws in the excess intensity.

use stormrisk::aggregate::{damage_loss_sweep, fit_damage_model, fit_loss_model, loglog_slope};
use stormrisk::nhpp::NhppParams;
use stormrisk::sweep::SweepSpec;

fn main() -> stormrisk::Result<()> {
    let nhpp = NhppParams::default();
    let spec = SweepSpec { rm_step_km: 5.0, ..SweepSpec::default() };
    let rows = damage_loss_sweep(&spec, &nhpp)?;

    let damage = fit_damage_model(&rows, nhpp.vcrit)?;
    println!("damage: p1 = {:.2}, p2 = {:.2}, 2 p1 = {:.2}", damage.p1, damage.p2, 2.0 * damage.p1);
    println!("  kept terms {:?}, RMS {:.3e}", damage.beta.kept, damage.beta.rms);
    let loss = fit_loss_model(&rows, nhpp.vcrit)?;
    println!("loss: p = {:.2}, 3 p = {:.2}", loss.p, 3.0 * loss.p);
    println!("  kept terms {:?}, RMS {:.3e}", loss.kappa.kept, loss.kappa.rms);

    let nominal = nhpp.lambda_norm * spec.duration_h;
    let pts: Vec<_> = rows.iter().map(|r| (r.vm, r.rm, r.damage_norm)).collect();
    for rm in spec.rm_values() {
        let s = loglog_slope(&pts, rm, (30.0, 80.0), nhpp.vcrit, nominal)?;
        println!("Rm = {rm:>4}: d ln(damage excess) / d ln(Vm - Vcrit) = {:.3} ± {:.3}", s.slope, s.se);
    }
    for (vm, rm) in [(40.0, 30.0), (70.0, 45.0)] {
        println!("Vm {vm}, Rm {rm}: damage {:.4e}, loss {:.4e}", damage.predict(vm, rm), loss.predict(vm, rm));
    }
    Ok(())
}
