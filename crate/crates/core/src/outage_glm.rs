//! Binomial regression of county outage counts on a storm predictor, and the
//! synthetic outage fixtures used to exercise it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::ensemble::Ensemble;
use crate::error::{invalid, parse_err, Result};
use crate::export::{fmt_num, write_provenance};
use crate::geo_grid::{county_average, CountySet};
use crate::nhpp::{cumulative_velocity, expected_failures_saturated, failure_rate_through, NhppParams, DEFAULT_UNIT_LENGTH_KM};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-10;
/// Fitted probabilities are kept this far from 0 and 1 in the weights.
pub const PROB_CLAMP: f64 = 1e-12;
/// `|c1 · sd(x)|` above this is reported as separation.
pub const SEPARATION_BOUND: f64 = 30.0;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maximum-likelihood logit-link binomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub c0: f64,
    pub c1: f64,
    pub se0: f64,
    pub se1: f64,
    /// Wald p-values.
    pub p0: f64,
    pub p1: f64,
    pub deviance: f64,
    pub null_deviance: f64,
    /// Likelihood-ratio statistic against the intercept-only model.
    pub lr_stat: f64,
    pub lr_p: f64,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    /// Deviance after each accepted step, starting from the initial guess.
    /// Never rises by more than [`deviance_rounding`].
    pub deviance_trace: Vec<f64>,
}

impl GlmFit {
    /// Whether the predictor is significant by the Wald test at `level`.
    pub fn significant(&self, level: f64) -> bool {
        self.p1 < level
    }
}

pub fn predict_outage_rate(fit: &GlmFit, x: f64) -> f64 {
    inv_logit(fit.c0 + fit.c1 * x)
}

/// Households without power in one county at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageObservation {
    pub county: String,
    pub time_h: f64,
    pub outages: u64,
    pub households: u64,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

fn deviance(y: &[f64], n: &[f64], mu: impl Fn(usize) -> f64) -> f64 {
    let mut d = 0.0;
    for i in 0..y.len() {
        let m = mu(i);
        d += xlogy(y[i], n[i] * m) + xlogy(n[i] - y[i], n[i] * (1.0 - m));
    }
    2.0 * d
}

/// Rounding level of a deviance sum. Near the optimum the deviance is flat
/// to this level, so smaller rises are not treated as increases.
pub fn deviance_rounding(dev: f64) -> f64 {
    1e-12 * dev.abs().max(1.0)
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Fits `logit p = c0 + c1 x` to `successes[i]` out of `trials[i]`.
///
/// Counts may be fractional, which lets a fit be refitted on its own mean
/// responses. The predictor is standardized internally, so affine rescaling
/// of `x` only rescales the coefficients.
pub fn fit_binomial_counts(x: &[f64], successes: &[f64], trials: &[f64]) -> Result<GlmFit> {
    let m = x.len();
    if successes.len() != m || trials.len() != m {
        return Err(invalid("observations", "predictor and observation counts differ"));
    }
    if m < 3 {
        return Err(invalid("observations", format!("need at least 3 counties, got {m}")));
    }
    for i in 0..m {
        if !x[i].is_finite() {
            return Err(invalid("predictor", format!("county {i} has a non-finite predictor")));
        }
        if !(trials[i] > 0.0 && successes[i] >= 0.0 && successes[i] <= trials[i]) {
            return Err(invalid(
                "observations",
                format!("county {i}: need 0 <= outages <= households and households > 0"),
            ));
        }
    }
    let mean = x.iter().sum::<f64>() / m as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
    if !(sd > 0.0) || sd <= 1e-12 * mean.abs() {
        return Err(invalid("predictor", "is constant across counties"));
    }
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
    let total_y: f64 = successes.iter().sum();
    let total_n: f64 = trials.iter().sum();
    let pooled = total_y / total_n;
    let null_deviance = deviance(successes, trials, |_| clamp_p(pooled));

    let dev_at = |b: [f64; 2]| deviance(successes, trials, |i| clamp_p(inv_logit(b[0] + b[1] * z[i])));
    let mut b = [logit(clamp_p(pooled)), 0.0];
    let mut dev = dev_at(b);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // weighted least squares on the working response
        let mut a = [[0.0; 2]; 2];
        let mut r = [0.0; 2];
        for i in 0..m {
            let eta = b[0] + b[1] * z[i];
            let mu = clamp_p(inv_logit(eta));
            let v = mu * (1.0 - mu);
            let w = trials[i] * v;
            let work = eta + (successes[i] / trials[i] - mu) / v;
            a[0][0] += w;
            a[0][1] += w * z[i];
            a[1][1] += w * z[i] * z[i];
            r[0] += w * work;
            r[1] += w * z[i] * work;
        }
        a[1][0] = a[0][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !(det > 0.0 && det.is_finite()) {
            break;
        }
        let target = [
            (a[1][1] * r[0] - a[0][1] * r[1]) / det,
            (a[0][0] * r[1] - a[1][0] * r[0]) / det,
        ];
        let step = [target[0] - b[0], target[1] - b[1]];
        let change = step[0].hypot(step[1]) / b[0].hypot(b[1]).max(1e-300);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [b[0] + t * step[0], b[1] + t * step[1]];
            let d = dev_at(cand);
            if d <= dev + deviance_rounding(dev) {
                accepted = Some((cand, d));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, d)) = accepted else {
            break;
        };
        b = cand;
        dev = d;
        trace.push(dev);
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }

    // information at the final coefficients
    let info = {
        let mut a = [[0.0; 2]; 2];
        for i in 0..m {
            let mu = clamp_p(inv_logit(b[0] + b[1] * z[i]));
            let w = trials[i] * mu * (1.0 - mu);
            a[0][0] += w;
            a[0][1] += w * z[i];
            a[1][1] += w * z[i] * z[i];
        }
        a[1][0] = a[0][1];
        a
    };
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    let cov_z = [
        [info[1][1] / det, -info[0][1] / det],
        [-info[1][0] / det, info[0][0] / det],
    ];
    // back to the original predictor: c1 = b1 / sd, c0 = b0 − b1 mean / sd
    let c1 = b[1] / sd;
    let c0 = b[0] - b[1] * mean / sd;
    let k = mean / sd;
    let var1 = cov_z[1][1] / (sd * sd);
    let var0 = cov_z[0][0] - 2.0 * k * cov_z[0][1] + k * k * cov_z[1][1];
    let se0 = var0.sqrt();
    let se1 = var1.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let wald = |c: f64, se: f64| {
        let zs = (c / se).abs();
        if zs.is_nan() {
            f64::NAN
        } else {
            (2.0 * normal.sf(zs)).min(1.0)
        }
    };
    let lr_stat = (null_deviance - dev).max(0.0);
    let lr_p = ChiSquared::new(1.0).expect("one dof").sf(lr_stat);
    Ok(GlmFit {
        c0,
        c1,
        se0,
        se1,
        p0: wald(c0, se0),
        p1: wald(c1, se1),
        deviance: dev,
        null_deviance,
        lr_stat,
        lr_p,
        converged,
        iterations,
        separation: (b[1]).abs() > SEPARATION_BOUND,
        deviance_trace: trace,
    })
}

/// Fits the county observations against one predictor value per county.
pub fn fit_binomial(x: &[f64], obs: &[OutageObservation]) -> Result<GlmFit> {
    let y: Vec<f64> = obs.iter().map(|o| o.outages as f64).collect();
    let n: Vec<f64> = obs.iter().map(|o| o.households as f64).collect();
    fit_binomial_counts(x, &y, &n)
}

/// County-level predictor of the outage regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    /// FR-2 accumulated up to the observation time.
    FailureRate,
    /// Ensemble-mean wind speed summed up to the observation time.
    CumulativeVelocity,
}

/// County averages of `predictor` at step `t_prime`, in the order of
/// `counties`.
pub fn county_predictor(
    e: &Ensemble,
    counties: &CountySet,
    nhpp: &NhppParams,
    t_prime: usize,
    predictor: Predictor,
) -> Result<Vec<f64>> {
    let grid = e.grid();
    let mut field = vec![0.0; grid.n_cells()];
    let cells: Vec<usize> = counties.counties.iter().flat_map(|c| c.cells.iter().copied()).collect();
    let values: Result<Vec<f64>> = cells
        .par_iter()
        .map(|&c| match predictor {
            Predictor::FailureRate => failure_rate_through(nhpp, e, c, t_prime),
            Predictor::CumulativeVelocity => cumulative_velocity(e, c, t_prime),
        })
        .collect();
    for (c, v) in cells.iter().zip(values?) {
        field[*c] = v;
    }
    counties.counties.iter().map(|c| county_average(&field, c)).collect()
}

/// Regression of one predictor at one observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageFit {
    pub predictor: Predictor,
    pub time_h: f64,
    pub time_index: usize,
    pub counties: Vec<String>,
    pub x: Vec<f64>,
    pub fit: GlmFit,
    /// Wald `p1 < 0.05`.
    pub significant: bool,
}

/// Computes the county predictor at `time_h` and regresses the observations
/// taken at that time on it.
pub fn outage_pipeline(
    e: &Ensemble,
    counties: &CountySet,
    nhpp: &NhppParams,
    obs: &[OutageObservation],
    time_h: f64,
    predictor: Predictor,
) -> Result<OutageFit> {
    let t_prime = e
        .times()
        .index_of(time_h)
        .ok_or_else(|| invalid("time_h", format!("{time_h} is not a step of the ensemble time axis")))?;
    let at: Vec<&OutageObservation> = obs.iter().filter(|o| o.time_h == time_h).collect();
    let all_x = county_predictor(e, counties, nhpp, t_prime, predictor)?;
    let mut by_name: BTreeMap<&str, &OutageObservation> = BTreeMap::new();
    for o in &at {
        if counties.get(&o.county).is_none() {
            return Err(invalid("observations", format!("county {:?} is not in the county set", o.county)));
        }
        if by_name.insert(&o.county, o).is_some() {
            return Err(invalid("observations", format!("county {:?} observed twice at t = {time_h}", o.county)));
        }
    }
    let mut names = Vec::new();
    let mut x = Vec::new();
    let mut sel = Vec::new();
    for (c, v) in counties.counties.iter().zip(&all_x) {
        if let Some(o) = by_name.get(c.name.as_str()) {
            names.push(c.name.clone());
            x.push(*v);
            sel.push((*o).clone());
        }
    }
    let fit = fit_binomial(&x, &sel)?;
    Ok(OutageFit {
        predictor,
        time_h,
        time_index: t_prime,
        counties: names,
        x,
        significant: fit.significant(0.05),
        fit,
    })
}

/// How synthetic outages depend on the storm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutageModel {
    /// Outage probability of a county is its expected saturated failure
    /// count over its asset count, with county line lengths from the asset
    /// density and failure rates FR-2 through the observation time.
    Saturated,
    /// Every household loses power with the same probability.
    WindIndependent { p: f64 },
}

/// Outage probability of every county under `model`.
pub fn county_outage_probabilities(
    e: &Ensemble,
    counties: &CountySet,
    nhpp: &NhppParams,
    t_prime: usize,
    model: OutageModel,
) -> Result<Vec<f64>> {
    match model {
        OutageModel::WindIndependent { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("outage_model.p", "must lie in [0, 1]"));
            }
            Ok(vec![p; counties.len()])
        }
        OutageModel::Saturated => {
            let area = e.grid().cell_area();
            counties
                .counties
                .iter()
                .map(|c| {
                    let len = c.asset_density * area;
                    let ng = (len / DEFAULT_UNIT_LENGTH_KM).round() as u64;
                    if ng == 0 {
                        return Ok(0.0);
                    }
                    let mut expected = 0.0;
                    for &cell in &c.cells {
                        let rate = failure_rate_through(nhpp, e, cell, t_prime)?;
                        expected += expected_failures_saturated(len * rate, ng)?;
                    }
                    Ok((expected / (ng as f64 * c.cells.len() as f64)).clamp(0.0, 1.0))
                })
                .collect()
        }
    }
}

/// Binomial(households, p) outages per county, seeded.
pub fn simulate_outages(
    counties: &CountySet,
    probabilities: &[f64],
    time_h: f64,
    seed: u64,
) -> Result<Vec<OutageObservation>> {
    if probabilities.len() != counties.len() {
        return Err(invalid("probabilities", "one probability per county is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    counties
        .counties
        .iter()
        .zip(probabilities)
        .map(|(c, &p)| {
            let d = Binomial::new(c.households, p).map_err(|e| invalid("probabilities", e.to_string()))?;
            Ok(OutageObservation {
                county: c.name.clone(),
                time_h: time_h,
                outages: d.sample(&mut rng),
                households: c.households,
            })
        })
        .collect()
}

/// Forward-simulated observations at `time_h` under `model`.
pub fn synthetic_observations(
    e: &Ensemble,
    counties: &CountySet,
    nhpp: &NhppParams,
    time_h: f64,
    model: OutageModel,
    seed: u64,
) -> Result<Vec<OutageObservation>> {
    let t_prime = e
        .times()
        .index_of(time_h)
        .ok_or_else(|| invalid("time_h", format!("{time_h} is not a step of the ensemble time axis")))?;
    let p = county_outage_probabilities(e, counties, nhpp, t_prime, model)?;
    simulate_outages(counties, &p, time_h, seed)
}

/// Writes `county,time_h,outages,households`.
pub fn write_observations_csv<W: Write>(obs: &[OutageObservation], mut w: W, provenance: Option<&str>) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    writeln!(w, "county,time_h,outages,households")?;
    for o in obs {
        writeln!(w, "{},{},{},{}", o.county, fmt_num(o.time_h), o.outages, o.households)?;
    }
    Ok(())
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<OutageObservation>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let want = ["county", "time_h", "outages", "households"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(parse_err(&shown, 1, format!("expected header {}", want.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(parse_err(&shown, line, format!("expected 4 fields, found {}", rec.len())));
        }
        let time_h: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(&shown, line, format!("time_h {:?} is not a number", &rec[1])))?;
        let outages: u64 = rec[2]
            .parse()
            .map_err(|_| parse_err(&shown, line, format!("outages {:?} is not a non-negative integer", &rec[2])))?;
        let households: u64 = rec[3]
            .parse()
            .map_err(|_| parse_err(&shown, line, format!("households {:?} is not a non-negative integer", &rec[3])))?;
        if outages > households {
            return Err(parse_err(&shown, line, format!("{outages} outages exceed {households} households")));
        }
        out.push(OutageObservation {
            county: rec[0].to_string(),
            time_h: time_h,
            outages,
            households,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{generate_synthetic_ensemble, EnsemblePerturbationSpec};
    use crate::geo_grid::{County, Grid, TimeAxis};
    use crate::wind_field::{Hemisphere, HollandParams, Track};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;
    use rand::Rng;

    fn sample(c0: f64, c1: f64, x: &[f64], n: u64, seed: u64) -> Vec<OutageObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        x.iter()
            .enumerate()
            .map(|(i, &xi)| OutageObservation {
                county: format!("c{i:02}"),
                time_h: 0.0,
                outages: Binomial::new(n, inv_logit(c0 + c1 * xi)).unwrap().sample(&mut rng),
                households: n,
            })
            .collect()
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + deviance_rounding(w[0]), "deviance rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn link_identities() {
        assert_eq!(logit(0.5), 0.0);
        assert_eq!(inv_logit(0.0), 0.5);
        assert!(inv_logit(-800.0) >= 0.0 && inv_logit(-800.0) < 1e-300);
        assert_eq!(inv_logit(800.0), 1.0);
        assert_relative_eq!(inv_logit(logit(0.2)), 0.2, max_relative = 1e-14);
    }

    #[test]
    fn prediction_limits() {
        let fit = fit_binomial_counts(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 6.0, 9.0], &[10.0; 4]).unwrap();
        assert!(fit.c1 > 0.0);
        assert!(predict_outage_rate(&fit, -1e6) < 1e-12);
        assert!(predict_outage_rate(&fit, 1e6) > 1.0 - 1e-12);
        assert_relative_eq!(predict_outage_rate(&fit, -fit.c0 / fit.c1), 0.5, max_relative = 1e-12);
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        for w in xs.windows(2) {
            assert!(predict_outage_rate(&fit, w[1]) > predict_outage_rate(&fit, w[0]));
        }
    }

    #[test]
    fn null_model() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let obs = sample(0.0, 0.0, &x, 100_000, 7);
        let fit = fit_binomial(&x, &obs).unwrap();
        assert!(fit.converged);
        let pooled = obs.iter().map(|o| o.outages).sum::<u64>() as f64 / (40.0 * 1e5);
        assert!(fit.c0.abs() < 0.02 && logit(pooled).abs() < 0.01);
        assert!(fit.p1 > 0.05, "{}", fit.p1);
        assert_monotone(&fit.deviance_trace);
    }

    #[test]
    fn recovery_within_three_se() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0 * 4.0).collect();
        let (c0, c1) = (-3.0, 1.2);
        let obs = sample(c0, c1, &x, 100_000, 11);
        let fit = fit_binomial(&x, &obs).unwrap();
        assert!(fit.converged);
        assert!((fit.c0 - c0).abs() <= 3.0 * fit.se0);
        assert!((fit.c1 - c1).abs() <= 3.0 * fit.se1);
        assert!(fit.p1 < 1e-10 && fit.lr_p < 1e-10);
        assert!(!fit.separation);
        assert_monotone(&fit.deviance_trace);
    }

    #[test]
    fn refit_on_mean_response() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.7 - 3.0).collect();
        let obs = sample(-1.0, 0.8, &x, 5_000, 3);
        let fit = fit_binomial(&x, &obs).unwrap();
        let n = vec![5_000.0; 12];
        let mu: Vec<f64> = x.iter().map(|&v| 5_000.0 * predict_outage_rate(&fit, v)).collect();
        let again = fit_binomial_counts(&x, &mu, &n).unwrap();
        assert!((again.c0 - fit.c0).abs() <= 1e-8 * fit.c0.abs().max(1.0));
        assert!((again.c1 - fit.c1).abs() <= 1e-8 * fit.c1.abs().max(1.0));
    }

    #[test]
    fn separation_is_flagged() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0, 0.0, 0.0, 100.0, 100.0, 100.0];
        let fit = fit_binomial_counts(&x, &y, &[100.0; 6]).unwrap();
        assert!(fit.separation);
        assert!(fit.c1 > 0.0);
        assert_monotone(&fit.deviance_trace);
    }

    #[test]
    fn preconditions() {
        assert!(fit_binomial_counts(&[1.0, 2.0], &[0.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(fit_binomial_counts(&[1.0, 1.0, 1.0], &[0.0, 1.0, 1.0], &[2.0; 3]).is_err());
        assert!(fit_binomial_counts(&[1.0, 2.0, 3.0], &[0.0, 3.0, 1.0], &[2.0; 3]).is_err());
    }

    #[test]
    fn observation_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let obs = sample(-2.0, 0.5, &[0.0, 1.0, 2.5], 1000, 1);
        let mut buf = Vec::new();
        write_observations_csv(&obs, &mut buf, Some("abc")).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(load_observations(&path).unwrap(), obs);
        std::fs::write(&path, "county,time_h,outages,households\na,0,5,3\n").unwrap();
        let err = load_observations(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    fn fixture() -> (Ensemble, CountySet) {
        let grid = Grid::new((-60.0, -20.0), 30, 36, 4.0).unwrap();
        let times = TimeAxis::hourly(24);
        let spec = EnsemblePerturbationSpec {
            base_track: Track { x0: (-20.0, 0.0), vtr: (0.0, 4.0), duration: 24.0 },
            base_params: HollandParams::new(50.0, 25.0, 1.0).unwrap(),
            sigma_track: 5.0,
            sigma_heading: 3.0,
            sigma_vm: 3.0,
            sigma_rm: 2.0,
            seed: 5,
            h: 8,
            asymmetric: true,
            hemisphere: Hemisphere::North,
        };
        let e = generate_synthetic_ensemble(&spec, &grid, &times).unwrap();
        // 5 × 6 blocks of 6 × 6 cells
        let mut counties = Vec::new();
        for bj in 0..6 {
            for bi in 0..5 {
                let cells = (0..6)
                    .flat_map(|j| (0..6).map(move |i| (bj * 6 + j) * 30 + bi * 6 + i))
                    .collect();
                counties.push(County {
                    name: format!("k{bj}{bi}"),
                    cells,
                    households: 50_000,
                    asset_density: 0.65,
                });
            }
        }
        let set = CountySet::new(counties, &grid).unwrap();
        (e, set)
    }

    #[test]
    fn closed_loop_significance() {
        let (e, counties) = fixture();
        let nhpp = NhppParams::default();
        let obs = synthetic_observations(&e, &counties, &nhpp, 23.0, OutageModel::Saturated, 42).unwrap();
        let f = outage_pipeline(&e, &counties, &nhpp, &obs, 23.0, Predictor::FailureRate).unwrap();
        assert!(f.significant && f.fit.c1 > 0.0);
        let null = synthetic_observations(&e, &counties, &nhpp, 23.0, OutageModel::WindIndependent { p: 0.3 }, 42).unwrap();
        let g = outage_pipeline(&e, &counties, &nhpp, &null, 23.0, Predictor::CumulativeVelocity).unwrap();
        assert!(g.fit.converged);
        assert!(outage_pipeline(&e, &counties, &nhpp, &obs, 23.5, Predictor::FailureRate).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn affine_equivariance(a in prop_oneof![0.01..100.0f64, -100.0..-0.01f64], b in -1e3..1e3f64, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..15).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let obs = sample(-0.5, 0.7, &x, 2_000, seed);
            let f = fit_binomial(&x, &obs).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let g = fit_binomial(&xs, &obs).unwrap();
            prop_assert!((g.c1 - f.c1 / a).abs() <= 1e-8 * (f.c1 / a).abs().max(1e-8));
            for (xi, xsi) in x.iter().zip(&xs) {
                prop_assert!((predict_outage_rate(&f, *xi) - predict_outage_rate(&g, *xsi)).abs() <= 1e-10);
            }
        }
    }
}
