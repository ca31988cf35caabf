//! Failure-count distributions at one cell: FD-A (Poisson at the FR-2 rate),
//! FD-B (mixture of member Poissons) and the saturated distribution for a
//! finite number of assets.

use stormrisk::ensemble::{generate_synthetic_ensemble, EnsemblePerturbationSpec};
use stormrisk::geo_grid::{Grid, TimeAxis};
use stormrisk::nhpp::{
    expected_failures_saturated, fd_a, fd_b, fr2, saturated_distribution, NhppParams, DEFAULT_UNIT_LENGTH_KM,
    URBAN_DENSITY,
};
use stormrisk::wind_field::{Hemisphere, HollandParams, Track};

fn main() -> stormrisk::Result<()> {
    let grid = Grid::new((-40.0, -20.0), 20, 40, 4.0)?;
    let times = TimeAxis::hourly(30);
    let spec = EnsemblePerturbationSpec {
        base_track: Track { x0: (0.0, 0.0), vtr: (0.0, 4.0), duration: 30.0 },
        base_params: HollandParams::new(55.0, 20.0, 1.0)?,
        sigma_track: 10.0,
        sigma_heading: 5.0,
        sigma_vm: 5.0,
        sigma_rm: 3.0,
        seed: 11,
        h: 12,
        asymmetric: false,
        hemisphere: Hemisphere::North,
    };
    let e = generate_synthetic_ensemble(&spec, &grid, &times)?;
    let p = NhppParams::default();
    // Cell just east of the track, 60 km north of genesis.
    let cell = 20 * 20 + 11;
    let rate = fr2(&p, &e, cell)?;
    let a = fd_a(&p, &e, cell, Some(12))?;
    let b = fd_b(&p, &e, cell, Some(12))?;
    println!("FR-2 at cell {cell}: {rate:.4} failures per km");
    println!("{:>4} {:>12} {:>12}", "n", "FD-A", "FD-B");
    for n in 0..=12 {
        println!("{n:>4} {:>12.6} {:>12.6}", a.pmf[n], b.pmf[n]);
    }
    println!("tail {:>12.3e} {:>12.3e}", a.tail, b.tail);

    let length = URBAN_DENSITY * grid.cell_area();
    let ng = (length / DEFAULT_UNIT_LENGTH_KM).round() as u64;
    let sat = saturated_distribution(length * rate, ng)?;
    println!(
        "urban cell: {ng} assets, expected failures {:.2}, P(all failed) {:.4}",
        expected_failures_saturated(length * rate, ng)?,
        sat.pmf[ng as usize]
    );
    Ok(())
}
