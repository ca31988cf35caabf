//! Forward-simulates county outages from an ensemble and regresses them on
//! the FR-2 and cumulative-wind predictors.

use stormrisk::ensemble::{generate_synthetic_ensemble, EnsemblePerturbationSpec};
use stormrisk::geo_grid::{County, CountySet, Grid, TimeAxis};
use stormrisk::nhpp::NhppParams;
use stormrisk::outage_glm::{outage_pipeline, predict_outage_rate, synthetic_observations, OutageModel, Predictor};
use stormrisk::wind_field::{Hemisphere, HollandParams, Track};

fn main() -> stormrisk::Result<()> {
    let grid = Grid::new((-60.0, -20.0), 30, 36, 4.0)?;
    let times = TimeAxis::hourly(24);
    let spec = EnsemblePerturbationSpec {
        base_track: Track { x0: (-20.0, 0.0), vtr: (0.0, 4.0), duration: 24.0 },
        base_params: HollandParams::new(50.0, 25.0, 1.0)?,
        sigma_track: 5.0,
        sigma_heading: 3.0,
        sigma_vm: 3.0,
        sigma_rm: 2.0,
        seed: 5,
        h: 8,
        asymmetric: true,
        hemisphere: Hemisphere::North,
    };
    let e = generate_synthetic_ensemble(&spec, &grid, &times)?;

    // Thirty counties of 6 × 6 cells each.
    let mut counties = Vec::new();
    for bj in 0..6 {
        for bi in 0..5 {
            let cells = (0..6).flat_map(|j| (0..6).map(move |i| (bj * 6 + j) * 30 + bi * 6 + i)).collect();
            counties.push(County { name: format!("k{bj}{bi}"), cells, households: 50_000, asset_density: 0.65 });
        }
    }
    let counties = CountySet::new(counties, &grid)?;
    let nhpp = NhppParams::default();

    for (label, model) in [("saturated", OutageModel::Saturated), ("wind-independent", OutageModel::WindIndependent { p: 0.2 })] {
        let obs = synthetic_observations(&e, &counties, &nhpp, 23.0, model, 42)?;
        println!("{label} outages:");
        for predictor in [Predictor::FailureRate, Predictor::CumulativeVelocity] {
            let f = outage_pipeline(&e, &counties, &nhpp, &obs, 23.0, predictor)?;
            let xmax = f.x.iter().cloned().fold(f64::MIN, f64::max);
            println!(
                "  {predictor:?}: c0 = {:.3} ± {:.3}, c1 = {:.4} ± {:.4}, p = {:.2e}, outage rate at max predictor {:.3}",
                f.fit.c0,
                f.fit.se0,
                f.fit.c1,
                f.fit.se1,
                f.fit.p1,
                predict_outage_rate(&f.fit, xmax)
            );
        }
    }
    Ok(())
}
