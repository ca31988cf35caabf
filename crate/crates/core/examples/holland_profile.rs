//! Radial wind profile of a Holland storm and its critical radius.

use stormrisk::critical_zone::critical_radius;
use stormrisk::wind_field::HollandParams;

fn main() -> stormrisk::Result<()> {
    let vthres = 20.6;
    println!("{:>8} {:>10} {:>10} {:>10}", "r_km", "B=1", "B=1.5", "B=2");
    let storms: Vec<HollandParams> = [1.0, 1.5, 2.0]
        .iter()
        .map(|&b| HollandParams::new(46.0, 30.0, b))
        .collect::<stormrisk::Result<_>>()?;
    for r in [0.0, 10.0, 20.0, 30.0, 45.0, 60.0, 90.0, 120.0, 200.0, 400.0] {
        print!("{r:>8.0}");
        for p in &storms {
            print!(" {:>10.3}", p.speed(r));
        }
        println!();
    }
    for p in &storms {
        match critical_radius(p, vthres)? {
            Some(rc) => println!("B = {}: winds fall below {vthres} m/s at {rc:.1} km", p.b),
            None => println!("B = {}: never reaches {vthres} m/s", p.b),
        }
    }
    Ok(())
}
