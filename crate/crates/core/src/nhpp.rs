//! Nonhomogeneous Poisson failure model: wind-dependent intensities, failure
//! rates for single fields and ensembles, and failure-count distributions.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{mean_series, ordered_mean, Ensemble};
use crate::error::{invalid, Result};
use crate::export::{fmt_num, write_provenance};
use crate::geo_grid::Grid;
use crate::wind_field::VelocitySource;

/// Velocity-dependent failure intensity in failures per hour per km.
pub trait Intensity: Sync {
    /// Intensity at wind speed `v` (m/s, non-negative).
    fn intensity(&self, v: f64) -> f64;
    /// Speed below which the intensity is the nominal rate.
    fn vcrit(&self) -> f64;
    fn lambda_norm(&self) -> f64;
}

/// Quadratic intensity `λnorm (1 + α((v/Vcrit)² − 1))` above `Vcrit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NhppParams {
    pub vcrit: f64,
    pub alpha: f64,
    pub lambda_norm: f64,
}

impl Default for NhppParams {
    fn default() -> Self {
        NhppParams {
            vcrit: 20.6,
            alpha: 4175.6,
            lambda_norm: 3.5e-5,
        }
    }
}

impl NhppParams {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.vcrit > 0.0 && self.vcrit.is_finite()) {
            return Err(invalid(format!("{field}.vcrit_mps"), "must be positive"));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("{field}.alpha"), "must be at least 1"));
        }
        if !(self.lambda_norm > 0.0 && self.lambda_norm.is_finite()) {
            return Err(invalid(format!("{field}.lambda_norm"), "must be positive"));
        }
        Ok(())
    }
}

impl Intensity for NhppParams {
    #[inline]
    fn intensity(&self, v: f64) -> f64 {
        if v < self.vcrit {
            self.lambda_norm
        } else {
            let s = v / self.vcrit;
            (1.0 + self.alpha * (s * s - 1.0)) * self.lambda_norm
        }
    }

    fn vcrit(&self) -> f64 {
        self.vcrit
    }

    fn lambda_norm(&self) -> f64 {
        self.lambda_norm
    }
}

/// Exponential alternative `λnorm exp(γ (v/Vcrit − 1))` above `Vcrit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialIntensity {
    pub vcrit: f64,
    pub gamma: f64,
    pub lambda_norm: f64,
}

impl Intensity for ExponentialIntensity {
    #[inline]
    fn intensity(&self, v: f64) -> f64 {
        if v < self.vcrit {
            self.lambda_norm
        } else {
            self.lambda_norm * (self.gamma * (v / self.vcrit - 1.0)).exp()
        }
    }

    fn vcrit(&self) -> f64 {
        self.vcrit
    }

    fn lambda_norm(&self) -> f64 {
        self.lambda_norm
    }
}

/// Intensity at `v`, rejecting negative or non-finite speeds.
pub fn poisson_intensity<I: Intensity + ?Sized>(p: &I, v: f64) -> Result<f64> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid("velocity_mps", format!("must be finite and non-negative, got {v}")));
    }
    Ok(p.intensity(v))
}

/// Accumulated failure rate `Σ_t λ(v_t) Δt` in failures per km.
pub fn failure_rate<I: Intensity + ?Sized>(p: &I, velocities: &[f64], dt: f64) -> f64 {
    velocities.iter().map(|&v| p.intensity(v)).sum::<f64>() * dt
}

/// Per-cell failure rates.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureRateField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl FailureRateField {
    /// Writes `cell_id,failure_rate_per_km`.
    pub fn write_csv<W: Write>(&self, mut w: W, provenance: Option<&str>) -> Result<()> {
        write_provenance(&mut w, provenance)?;
        writeln!(w, "cell_id,failure_rate_per_km")?;
        for (cell, v) in self.values.iter().enumerate() {
            writeln!(w, "{cell},{}", fmt_num(*v))?;
        }
        Ok(())
    }
}

/// Failure rate of every cell of a single wind field.
pub fn failure_rate_field<I, S>(p: &I, src: &S) -> FailureRateField
where
    I: Intensity + ?Sized,
    S: VelocitySource + ?Sized,
{
    let times = *src.times();
    let floor = src.floor(p.vcrit());
    let values = (0..src.grid().n_cells())
        .into_par_iter()
        .map_init(
            || vec![0.0; times.n_steps],
            |buf, cell| {
                src.series_above(cell, &floor, buf);
                failure_rate(p, buf, times.dt)
            },
        )
        .collect();
    FailureRateField {
        grid: *src.grid(),
        values,
    }
}

/// FR-1: the failure rate of the ensemble-mean velocities at `cell`.
pub fn fr1<I: Intensity + ?Sized>(p: &I, e: &Ensemble, cell: usize) -> Result<f64> {
    e.grid().check_cell(cell)?;
    Ok(failure_rate(p, &mean_series(e, cell), e.times().dt))
}

/// Per-member failure rates at `cell`.
pub fn member_rates<I: Intensity + ?Sized>(p: &I, e: &Ensemble, cell: usize) -> Result<Vec<f64>> {
    e.grid().check_cell(cell)?;
    let dt = e.times().dt;
    Ok(e.members()
        .iter()
        .map(|m| failure_rate(p, m.series(cell), dt))
        .collect())
}

/// FR-2: the ensemble mean of member failure rates at `cell`.
pub fn fr2<I: Intensity + ?Sized>(p: &I, e: &Ensemble, cell: usize) -> Result<f64> {
    Ok(ordered_mean(&member_rates(p, e, cell)?))
}

/// FR-1 at every cell.
pub fn fr1_field<I: Intensity + ?Sized>(p: &I, e: &Ensemble) -> FailureRateField {
    let values = (0..e.grid().n_cells())
        .into_par_iter()
        .map(|c| failure_rate(p, &mean_series(e, c), e.times().dt))
        .collect();
    FailureRateField { grid: *e.grid(), values }
}

/// FR-2 at every cell.
pub fn fr2_field<I: Intensity + ?Sized>(p: &I, e: &Ensemble) -> FailureRateField {
    let values = (0..e.grid().n_cells())
        .into_par_iter()
        .map(|c| ordered_mean(&member_rates(p, e, c).expect("cell in range")))
        .collect();
    FailureRateField { grid: *e.grid(), values }
}

fn check_step(e: &Ensemble, t_prime: usize) -> Result<()> {
    if t_prime < e.times().n_steps {
        Ok(())
    } else {
        Err(invalid("t_prime", format!("step {t_prime} is past the last step {}", e.times().n_steps - 1)))
    }
}

/// FR-2 accumulated over steps `0..=t_prime` only.
pub fn failure_rate_through<I: Intensity + ?Sized>(p: &I, e: &Ensemble, cell: usize, t_prime: usize) -> Result<f64> {
    e.grid().check_cell(cell)?;
    check_step(e, t_prime)?;
    let dt = e.times().dt;
    let rates: Vec<f64> = e
        .members()
        .iter()
        .map(|m| failure_rate(p, &m.series(cell)[..=t_prime], dt))
        .collect();
    Ok(ordered_mean(&rates))
}

/// Ensemble-averaged sum of velocities over steps `0..=t_prime`, in
/// m/s·steps.
pub fn cumulative_velocity(e: &Ensemble, cell: usize, t_prime: usize) -> Result<f64> {
    e.grid().check_cell(cell)?;
    check_step(e, t_prime)?;
    let sums: Vec<f64> = e
        .members()
        .iter()
        .map(|m| m.series(cell)[..=t_prime].iter().sum())
        .collect();
    Ok(ordered_mean(&sums))
}

/// Which construction produced a [`FailureDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    /// Poisson at the ensemble-mean rate (FD-A).
    Poisson,
    /// Equal-weight mixture of member Poissons (FD-B).
    Mixture,
    /// Poisson capped at a finite asset count.
    Saturated,
}

/// Probability mass over `0..=n_max` plus the mass beyond `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureDistribution {
    pub kind: DistributionKind,
    pub pmf: Vec<f64>,
    pub tail: f64,
}

impl FailureDistribution {
    pub fn total(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.tail
    }

    pub fn mean_truncated(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Writes `n,probability` rows and a final `tail,probability` row.
    pub fn write_csv<W: Write>(&self, mut w: W, provenance: Option<&str>) -> Result<()> {
        write_provenance(&mut w, provenance)?;
        writeln!(w, "n,probability")?;
        for (n, p) in self.pmf.iter().enumerate() {
            writeln!(w, "{n},{}", fmt_num(*p))?;
        }
        writeln!(w, "tail,{}", fmt_num(self.tail))?;
        Ok(())
    }
}

/// Normalized Poisson probabilities over the range that carries all but a
/// negligible (below 1e-300) share of the mass.
///
/// Log-weights are accumulated outward from the mode with `ln(λ/n)` steps and
/// exponentiated relative to the mode, which avoids both overflow and the
/// cancellation in `n ln λ − λ − ln n!` at large `λ`.
#[derive(Debug, Clone)]
pub struct PoissonTable {
    lo: usize,
    p: Vec<f64>,
}

impl PoissonTable {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "Poisson rate must be finite and non-negative");
        if lambda == 0.0 {
            return PoissonTable { lo: 0, p: vec![1.0] };
        }
        let mode = lambda.floor() as usize;
        let k = (40.0 * lambda.sqrt()).ceil() as usize + 40;
        let lo = mode.saturating_sub(k);
        let hi = mode + k;
        let ln_l = lambda.ln();
        let mut lw = vec![0.0; hi - lo + 1];
        for n in mode..hi {
            lw[n + 1 - lo] = lw[n - lo] + ln_l - ((n + 1) as f64).ln();
        }
        for n in (lo + 1..=mode).rev() {
            lw[n - 1 - lo] = lw[n - lo] - ln_l + (n as f64).ln();
        }
        let mut p: Vec<f64> = lw.iter().map(|l| l.exp()).collect();
        let s: f64 = p.iter().sum();
        for x in &mut p {
            *x /= s;
        }
        PoissonTable { lo, p }
    }

    pub fn pmf(&self, n: usize) -> f64 {
        if n < self.lo {
            0.0
        } else {
            self.p.get(n - self.lo).copied().unwrap_or(0.0)
        }
    }

    /// `P(N >= k)`.
    pub fn upper(&self, k: usize) -> f64 {
        let start = k.saturating_sub(self.lo);
        if start == 0 {
            return 1.0;
        }
        self.p.iter().skip(start).rev().sum::<f64>().min(1.0)
    }

    /// Smallest `n` with `P(N <= n) >= q`.
    pub fn quantile(&self, q: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.p.iter().enumerate() {
            acc += p;
            if acc >= q {
                return self.lo + i;
            }
        }
        self.lo + self.p.len() - 1
    }
}

/// Truncation point used when none is given: the `1 − 1e-9` quantile of the
/// largest rate.
pub fn default_n_max(rates: &[f64]) -> usize {
    let top = rates.iter().cloned().fold(0.0, f64::max);
    PoissonTable::new(top).quantile(1.0 - 1e-9)
}

/// Poisson(`lambda`) over `0..=n_max` with explicit tail mass.
pub fn poisson_distribution(lambda: f64, n_max: usize) -> Result<FailureDistribution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("rate", format!("must be finite and non-negative, got {lambda}")));
    }
    let t = PoissonTable::new(lambda);
    Ok(FailureDistribution {
        kind: DistributionKind::Poisson,
        pmf: (0..=n_max).map(|n| t.pmf(n)).collect(),
        tail: t.upper(n_max + 1),
    })
}

/// Equal-weight mixture of Poissons. Identical rates are pooled, so a
/// constant rate vector yields exactly the single Poisson.
pub fn poisson_mixture(rates: &[f64], n_max: usize) -> Result<FailureDistribution> {
    if rates.is_empty() {
        return Err(invalid("rates", "mixture needs at least one rate"));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for r in sorted {
        match groups.last_mut() {
            Some((v, c)) if *v == r => *c += 1,
            _ => groups.push((r, 1)),
        }
    }
    if groups.len() == 1 {
        let mut d = poisson_distribution(groups[0].0, n_max)?;
        d.kind = DistributionKind::Mixture;
        return Ok(d);
    }
    let h = rates.len() as f64;
    let mut pmf = vec![0.0; n_max + 1];
    let mut tail = 0.0;
    for (r, c) in groups {
        let d = poisson_distribution(r, n_max)?;
        let w = c as f64 / h;
        for (acc, p) in pmf.iter_mut().zip(&d.pmf) {
            *acc += w * p;
        }
        tail += w * d.tail;
    }
    Ok(FailureDistribution {
        kind: DistributionKind::Mixture,
        pmf,
        tail,
    })
}

/// FD-A: Poisson with the FR-2 rate at `cell`.
pub fn fd_a<I: Intensity + ?Sized>(p: &I, e: &Ensemble, cell: usize, n_max: Option<usize>) -> Result<FailureDistribution> {
    let rates = member_rates(p, e, cell)?;
    let n_max = n_max.unwrap_or_else(|| default_n_max(&rates));
    poisson_distribution(ordered_mean(&rates), n_max)
}

/// FD-B: the mixture of member Poissons at `cell`.
pub fn fd_b<I: Intensity + ?Sized>(p: &I, e: &Ensemble, cell: usize, n_max: Option<usize>) -> Result<FailureDistribution> {
    let rates = member_rates(p, e, cell)?;
    let n_max = n_max.unwrap_or_else(|| default_n_max(&rates));
    poisson_mixture(&rates, n_max)
}

fn check_rate(total_rate: f64) -> Result<()> {
    if total_rate >= 0.0 && total_rate.is_finite() {
        Ok(())
    } else {
        Err(invalid("total_rate", format!("must be finite and non-negative, got {total_rate}")))
    }
}

/// Poisson(`total_rate`) for `n < ng` with all remaining mass at `ng`.
pub fn saturated_distribution(total_rate: f64, ng: u64) -> Result<FailureDistribution> {
    check_rate(total_rate)?;
    let ng = ng as usize;
    let t = PoissonTable::new(total_rate);
    let mut pmf: Vec<f64> = (0..ng).map(|n| t.pmf(n)).collect();
    pmf.push(t.upper(ng));
    Ok(FailureDistribution {
        kind: DistributionKind::Saturated,
        pmf,
        tail: 0.0,
    })
}

/// Mean of [`saturated_distribution`]: `Σ_{n<Ng} n p(n) + Ng P(N ≥ Ng)`.
pub fn expected_failures_saturated(total_rate: f64, ng: u64) -> Result<f64> {
    check_rate(total_rate)?;
    if ng == 0 || total_rate == 0.0 {
        return Ok(0.0);
    }
    let t = PoissonTable::new(total_rate);
    let ng_us = ng as usize;
    let head: f64 = (t.lo..ng_us.min(t.lo + t.p.len()))
        .map(|n| n as f64 * t.pmf(n))
        .sum();
    Ok(head + ng as f64 * t.upper(ng_us))
}

/// Overhead line inventory per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetInventory {
    /// Line length per cell, km.
    pub lengths: Vec<f64>,
    /// Length of one asset, km.
    pub unit_length: f64,
}

/// Default asset length, km.
pub const DEFAULT_UNIT_LENGTH_KM: f64 = 0.1;
/// Urban line density, km per km².
pub const URBAN_DENSITY: f64 = 7.08;
/// Rural line density, km per km².
pub const RURAL_DENSITY: f64 = 0.65;

impl AssetInventory {
    pub fn new(lengths: Vec<f64>, unit_length: f64) -> Result<Self> {
        if !(unit_length > 0.0 && unit_length.is_finite()) {
            return Err(invalid("inventory.unit_length_km", "must be positive"));
        }
        if let Some(k) = lengths.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(invalid("inventory.lengths", format!("cell {k} has a negative or non-finite length")));
        }
        Ok(AssetInventory { lengths, unit_length })
    }

    /// Uniform density over every cell of `grid`.
    pub fn uniform(grid: &Grid, density: f64, unit_length: f64) -> Result<Self> {
        if !(density >= 0.0 && density.is_finite()) {
            return Err(invalid("inventory.asset_density_km_per_km2", "must be non-negative"));
        }
        Self::new(vec![density * grid.cell_area(); grid.n_cells()], unit_length)
    }

    /// Asset count of each cell, `round(length / unit_length)`.
    pub fn counts(&self) -> Vec<u64> {
        self.lengths
            .iter()
            .map(|l| (l / self.unit_length).round() as u64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{generate_synthetic_ensemble, EnsemblePerturbationSpec};
    use crate::geo_grid::TimeAxis;
    use crate::wind_field::{Hemisphere, HollandParams, Track, WindField};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const P: NhppParams = NhppParams { vcrit: 20.6, alpha: 4175.6, lambda_norm: 3.5e-5 };

    fn single_cell_ensemble(series: &[&[f64]]) -> Ensemble {
        let g = Grid::new((0.0, 0.0), 1, 1, 1.0).unwrap();
        let t = TimeAxis::hourly(series[0].len());
        Ensemble::new(series.iter().map(|s| WindField::new(g, t, s.to_vec()).unwrap()).collect()).unwrap()
    }

    // e^{-λ} λ^n / n! by direct products.
    fn poisson_direct(lambda: f64, n: usize) -> f64 {
        let mut p = (-lambda).exp();
        for k in 1..=n {
            p *= lambda / k as f64;
        }
        p
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(poisson_intensity(&P, 10.0).unwrap(), 3.5e-5);
        assert_eq!(poisson_intensity(&P, 20.6).unwrap(), 3.5e-5);
        let v = poisson_intensity(&P, 41.2).unwrap();
        assert_relative_eq!(v, 3.5e-5 * (1.0 + 3.0 * 4175.6), max_relative = 1e-14);
        assert!((v - 0.43847).abs() < 5e-6);
        assert!(poisson_intensity(&P, -1.0).is_err());
    }

    #[test]
    fn intensity_split_form() {
        for v in [0.0f64, 5.0, 20.6, 25.0, 41.2, 80.0] {
            let f = v.max(P.vcrit) / P.vcrit;
            let split = P.lambda_norm * (1.0 - P.alpha) + P.lambda_norm * P.alpha * f * f;
            assert_relative_eq!(P.intensity(v), split, max_relative = 1e-9);
        }
    }

    #[test]
    fn exponential_variant() {
        let x = ExponentialIntensity { vcrit: 20.0, gamma: 2.0, lambda_norm: 1e-4 };
        assert_eq!(x.intensity(10.0), 1e-4);
        assert_relative_eq!(x.intensity(40.0), 1e-4 * 2f64.exp(), max_relative = 1e-15);
    }

    #[test]
    fn failure_rate_examples() {
        let calm = vec![5.0; 121];
        let fr = failure_rate(&P, &calm, 1.0);
        assert_relative_eq!(fr, 3.5e-5 * 121.0, max_relative = 1e-12);
        assert!((fr - 0.0042).abs() < 5e-5);
        assert_relative_eq!(failure_rate(&P, &[41.2], 1.0), 3.5e-5 * (1.0 + 3.0 * 4175.6), max_relative = 1e-12);
        assert!((failure_rate(&P, &[41.2], 1.0) - 0.43847).abs() < 5e-6);
        assert_eq!(failure_rate(&P, &[], 1.0), 0.0);
    }

    #[test]
    fn fr1_fr2_examples() {
        let e = single_cell_ensemble(&[&[10.0], &[41.2]]);
        let f1 = fr1(&P, &e, 0).unwrap();
        let f2 = fr2(&P, &e, 0).unwrap();
        assert_relative_eq!(f1, 3.5e-5 * (1.0 + 4175.6 * ((25.6f64 / 20.6).powi(2) - 1.0)), max_relative = 1e-12);
        assert!((f1 - 0.0800).abs() < 5e-4);
        assert!((f2 - 0.21925).abs() < 5e-6);
        assert!(f2 > f1);

        let one = single_cell_ensemble(&[&[30.0, 12.0]]);
        assert_eq!(fr1(&P, &one, 0).unwrap(), fr2(&P, &one, 0).unwrap());
        let same = single_cell_ensemble(&[&[30.0, 12.0], &[30.0, 12.0], &[30.0, 12.0]]);
        assert_eq!(fr1(&P, &same, 0).unwrap(), fr2(&P, &same, 0).unwrap());
        assert!(fr1(&P, &same, 1).is_err());
    }

    #[test]
    fn time_resolved_and_cumulative() {
        let e = single_cell_ensemble(&[&[10.0, 20.0]]);
        assert_eq!(cumulative_velocity(&e, 0, 1).unwrap(), 30.0);
        assert_eq!(cumulative_velocity(&e, 0, 0).unwrap(), 10.0);
        assert!(cumulative_velocity(&e, 0, 2).is_err());
        let many = single_cell_ensemble(&[&[10.0, 20.0], &[10.0, 20.0]]);
        assert_eq!(cumulative_velocity(&many, 0, 1).unwrap(), 30.0);
        let zero = single_cell_ensemble(&[&[0.0, 0.0]]);
        assert_eq!(cumulative_velocity(&zero, 0, 1).unwrap(), 0.0);

        let e = single_cell_ensemble(&[&[30.0, 41.2, 10.0], &[25.0, 22.0, 50.0]]);
        assert_eq!(failure_rate_through(&P, &e, 0, 2).unwrap(), fr2(&P, &e, 0).unwrap());
        let first = (P.intensity(30.0) + P.intensity(25.0)) / 2.0;
        assert_relative_eq!(failure_rate_through(&P, &e, 0, 0).unwrap(), first, max_relative = 1e-15);
    }

    #[test]
    fn fd_examples() {
        let b = poisson_mixture(&[0.1, 10.0], 60).unwrap();
        assert_relative_eq!(b.pmf[0], 0.5 * ((-0.1f64).exp() + (-10f64).exp()), max_relative = 1e-13);
        assert!((b.pmf[0] - 0.45244).abs() < 5e-6);
        let a = poisson_distribution(5.05, 60).unwrap();
        assert_relative_eq!(a.pmf[0], (-5.05f64).exp(), max_relative = 1e-13);
        assert!((a.pmf[0] - 0.00641).abs() < 5e-6);
        for d in [&a, &b] {
            assert!((d.total() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn fd_identical_members_coincide() {
        let s: &[f64] = &[30.0, 41.2, 10.0];
        let e = single_cell_ensemble(&[s; 4]);
        let a = fd_a(&P, &e, 0, None).unwrap();
        let b = fd_b(&P, &e, 0, None).unwrap();
        assert_eq!(a.pmf, b.pmf);
        assert_eq!(a.tail, b.tail);
        assert_eq!(a.kind, DistributionKind::Poisson);
        assert_eq!(b.kind, DistributionKind::Mixture);
    }

    #[test]
    fn default_truncation_covers_quantile() {
        let n = default_n_max(&[3.0, 12.0]);
        let d = poisson_distribution(12.0, n).unwrap();
        assert!(d.tail <= 1e-9);
        let shorter = poisson_distribution(12.0, n - 1).unwrap();
        assert!(shorter.tail > 1e-9);
    }

    #[test]
    fn poisson_table_accuracy() {
        for lambda in [1e-8, 0.3, 1.0, 7.5, 60.0] {
            let t = PoissonTable::new(lambda);
            for n in 0..40 {
                let want = poisson_direct(lambda, n);
                assert!((t.pmf(n) - want).abs() <= 1e-12 * want + 1e-300, "{lambda} {n}");
            }
        }
        // large rates keep their normalization
        for lambda in [1e4, 3.7e6] {
            let d = poisson_distribution(lambda, lambda as usize).unwrap();
            assert!((d.total() - 1.0).abs() <= 1e-12);
            assert!((d.tail - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn saturation_examples() {
        let z = saturated_distribution(3.0, 0).unwrap();
        assert_eq!(z.pmf, vec![1.0]);
        let d = saturated_distribution(1.0, 2).unwrap();
        let e1 = (-1f64).exp();
        assert_relative_eq!(d.pmf[0], e1, max_relative = 1e-14);
        assert_relative_eq!(d.pmf[1], e1, max_relative = 1e-14);
        assert_relative_eq!(d.pmf[2], 1.0 - 2.0 * e1, max_relative = 1e-13);
        let m = expected_failures_saturated(1.0, 2).unwrap();
        assert_relative_eq!(m, e1 + 2.0 * (1.0 - 2.0 * e1), max_relative = 1e-13);
        assert!((m - 0.89636).abs() < 5e-6);
        assert_eq!(expected_failures_saturated(0.0, 30).unwrap(), 0.0);
        assert!((expected_failures_saturated(1e4, 30).unwrap() - 30.0).abs() < 1e-9);
        assert!(saturated_distribution(-1.0, 2).is_err());
    }

    #[test]
    fn saturation_curve_is_concave_and_monotone() {
        let ys: Vec<f64> = (0..=300)
            .map(|k| expected_failures_saturated(k as f64 * 0.25, 30).unwrap())
            .collect();
        for w in ys.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // second differences are non-positive once the curve bends over
        for w in ys.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-12);
        }
        assert!(ys[300] > 29.9 && ys[300] <= 30.0);
    }

    #[test]
    fn inventory_rounding() {
        let inv = AssetInventory::new(vec![0.65, 7.08, 0.04, 0.05], DEFAULT_UNIT_LENGTH_KM).unwrap();
        assert_eq!(inv.counts(), vec![7, 71, 0, 1]);
        assert!(AssetInventory::new(vec![-1.0], 0.1).is_err());
        assert!(AssetInventory::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn field_matches_per_cell_rates() {
        let grid = Grid::new((-100.0, -60.0), 20, 30, 10.0).unwrap();
        let times = TimeAxis::hourly(12);
        let track = Track { x0: (0.0, 0.0), vtr: (0.0, 4.0), duration: 12.0 };
        let storm = crate::wind_field::StormField::asymmetric(track, HollandParams::new(45.0, 25.0, 1.0).unwrap(), grid, times, Hemisphere::North).unwrap();
        let lazy = failure_rate_field(&P, &storm);
        let full = storm.materialize();
        for cell in 0..grid.n_cells() {
            let want = failure_rate(&P, full.series(cell), 1.0);
            assert_relative_eq!(lazy.values[cell], want, max_relative = 1e-13);
        }
    }

    #[test]
    fn rate_csv() {
        let g = Grid::new((0.0, 0.0), 2, 1, 1.0).unwrap();
        let f = FailureRateField { grid: g, values: vec![0.0042, 17.2] };
        let mut buf = Vec::new();
        f.write_csv(&mut buf, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cell_id,failure_rate_per_km\n0,0.0042\n1,17.2\n");
        let d = saturated_distribution(1.0, 1).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,probability\n0,0.367879441\n1,0.632120559\ntail,0\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn intensity_monotone_and_flat_below_vcrit(a in 0.0..100.0f64, b in 0.0..100.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(P.intensity(lo) <= P.intensity(hi));
            if hi < P.vcrit {
                prop_assert_eq!(P.intensity(lo), P.intensity(hi));
            }
        }

        #[test]
        fn failure_rate_linear_and_additive(vs in proptest::collection::vec(0.0..70.0f64, 2..40), dt in 0.1..3.0f64, split in 0usize..40) {
            let k = split.min(vs.len());
            let whole = failure_rate(&P, &vs, dt);
            let parts = failure_rate(&P, &vs[..k], dt) + failure_rate(&P, &vs[k..], dt);
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
            prop_assert!((failure_rate(&P, &vs, 2.0 * dt) - 2.0 * whole).abs() <= 1e-12 * whole.max(1.0));
        }

        #[test]
        fn jensen_and_monotone_through_time(seed in any::<u64>(), h in 1usize..10) {
            let spec = EnsemblePerturbationSpec {
                base_track: Track { x0: (0.0, -20.0), vtr: (0.0, 5.0), duration: 10.0 },
                base_params: HollandParams::new(40.0, 15.0, 1.0).unwrap(),
                sigma_track: 15.0, sigma_heading: 10.0, sigma_vm: 8.0, sigma_rm: 5.0,
                seed, h, asymmetric: true, hemisphere: Hemisphere::North,
            };
            let g = Grid::new((-50.0, -50.0), 5, 5, 20.0).unwrap();
            let e = generate_synthetic_ensemble(&spec, &g, &TimeAxis::hourly(10)).unwrap();
            for cell in 0..g.n_cells() {
                prop_assert!(fr2(&P, &e, cell).unwrap() >= fr1(&P, &e, cell).unwrap() - 1e-12);
                let mut prev = 0.0;
                for t in 0..10 {
                    let r = failure_rate_through(&P, &e, cell, t).unwrap();
                    prop_assert!(r >= prev);
                    prev = r;
                }
                let fa = fd_a(&P, &e, cell, None).unwrap();
                let fb = fd_b(&P, &e, cell, None).unwrap();
                prop_assert!((fa.total() - 1.0).abs() <= 1e-12);
                prop_assert!((fb.total() - 1.0).abs() <= 1e-12);
                // mixture identity
                let rates = member_rates(&P, &e, cell).unwrap();
                for n in 0..fb.pmf.len().min(6) {
                    let want = rates.iter().map(|r| poisson_direct(*r, n)).sum::<f64>() / h as f64;
                    prop_assert!((fb.pmf[n] - want).abs() <= 1e-13);
                }
            }
        }

        #[test]
        fn saturated_brute_force(rate in 0.0..3.0f64, ng in 0u64..=5) {
            let mut mean = 0.0;
            let mut below = 0.0;
            for n in 0..ng as usize {
                let p = poisson_direct(rate, n);
                mean += n as f64 * p;
                below += p;
            }
            mean += ng as f64 * (1.0 - below);
            prop_assert!((expected_failures_saturated(rate, ng).unwrap() - mean).abs() <= 1e-12);
            let d = saturated_distribution(rate, ng).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn saturated_mean_bounds(rate in 0.0..200.0f64, extra in 0.0..5.0f64, ng in 0u64..60) {
            let m = expected_failures_saturated(rate, ng).unwrap();
            prop_assert!(m >= 0.0 && m <= ng as f64 + 1e-12);
            prop_assert!(m <= rate + 1e-12);
            prop_assert!(expected_failures_saturated(rate + extra, ng).unwrap() >= m - 1e-12);
        }
    }
}
