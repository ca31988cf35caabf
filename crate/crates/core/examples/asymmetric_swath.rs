//! Peak winds along a cross-section of a moving storm, with and without the
//! translation asymmetry.

use stormrisk::geo_grid::{Grid, TimeAxis};
use stormrisk::wind_field::{Hemisphere, HollandParams, StormField, Track, WindField};

fn main() -> stormrisk::Result<()> {
    let grid = Grid::new((-150.0, -50.0), 60, 160, 5.0)?;
    let times = TimeAxis::hourly(48);
    let track = Track { x0: (0.0, 0.0), vtr: (0.0, 5.0), duration: 48.0 };
    let p = HollandParams::new(40.0, 30.0, 1.0)?;
    let axi = StormField::axisymmetric(track, p, grid, times)?.materialize();
    let asym = StormField::asymmetric(track, p, grid, times, Hemisphere::North)?.materialize();

    // Row of cells 400 km north of genesis, crossed by the eye after ~22 h.
    let row = ((400.0 - grid.origin.1) / grid.cell_size) as usize;
    println!("{:>8} {:>10} {:>10}", "x_km", "peak_axi", "peak_asym");
    for i in (0..grid.nx).step_by(4) {
        let cell = row * grid.nx + i;
        let peak = |f: &WindField| f.series(cell).iter().cloned().fold(0.0, f64::max);
        println!("{:>8.1} {:>10.2} {:>10.2}", grid.center(cell).0, peak(&axi), peak(&asym));
    }
    Ok(())
}
