//! FR-1 (rate of the mean wind) against FR-2 (mean of member rates) over a
//! perturbed ensemble. FR-2 is never smaller.

use stormrisk::ensemble::{generate_synthetic_ensemble, EnsemblePerturbationSpec};
use stormrisk::geo_grid::{Grid, TimeAxis};
use stormrisk::nhpp::{fr1_field, fr2_field, NhppParams};
use stormrisk::wind_field::{Hemisphere, HollandParams, Track};

fn main() -> stormrisk::Result<()> {
    let grid = Grid::new((-100.0, -40.0), 50, 60, 4.0)?;
    let times = TimeAxis::hourly(36);
    let spec = EnsemblePerturbationSpec {
        base_track: Track { x0: (0.0, 0.0), vtr: (0.0, 4.0), duration: 36.0 },
        base_params: HollandParams::new(45.0, 25.0, 1.0)?,
        sigma_track: 15.0,
        sigma_heading: 6.0,
        sigma_vm: 4.0,
        sigma_rm: 3.0,
        seed: 3,
        h: 20,
        asymmetric: true,
        hemisphere: Hemisphere::North,
    };
    let e = generate_synthetic_ensemble(&spec, &grid, &times)?;
    let p = NhppParams::default();
    let f1 = fr1_field(&p, &e);
    let f2 = fr2_field(&p, &e);

    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let ratio_max = f1
        .values
        .iter()
        .zip(&f2.values)
        .filter(|(a, _)| **a > 1e-3)
        .map(|(a, b)| b / a)
        .fold(1.0, f64::max);
    println!("members: {}", e.h());
    println!("total FR-1: {:.4}", sum(&f1.values));
    println!("total FR-2: {:.4}", sum(&f2.values));
    println!("largest FR-2 / FR-1 at a cell: {ratio_max:.3}");
    let below = f1.values.iter().zip(&f2.values).filter(|(a, b)| b < a).count();
    println!("cells with FR-2 < FR-1: {below}");
    Ok(())
}
