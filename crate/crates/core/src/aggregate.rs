//! Grid totals of damage and repair loss, and the parametric models fitted to
//! them over (Vm, Rm) sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::export::{fmt_num, write_provenance};
use crate::lsq::{ols, OlsFit};
use crate::nhpp::{expected_failures_saturated, AssetInventory, FailureRateField, NhppParams};
use crate::sweep::{axisymmetric_swath, SweepSpec};
use crate::wind_field::VelocitySource;

/// `Σ_g Λg`, failures per km summed over cells.
pub fn total_damage(fr: &FailureRateField) -> f64 {
    fr.values.iter().sum()
}

/// Supercritical part of one cell's failure rate, `Σ_k λnorm α ((v/Vc)² − 1) dt`.
fn excess_rate(p: &NhppParams, vs: &[f64], dt: f64) -> f64 {
    vs.iter()
        .filter(|&&v| v >= p.vcrit)
        .map(|&v| {
            let s = v / p.vcrit;
            p.lambda_norm * p.alpha * (s * s - 1.0) * dt
        })
        .sum()
}

fn excess_rates<S: VelocitySource + ?Sized>(p: &NhppParams, src: &S) -> Vec<f64> {
    let grid = *src.grid();
    let times = *src.times();
    let floor = src.floor(p.vcrit);
    (0..grid.n_cells())
        .into_par_iter()
        .map_init(
            || vec![0.0; times.n_steps],
            |buf, cell| {
                src.series_above(cell, &floor, buf);
                excess_rate(p, buf, times.dt)
            },
        )
        .collect()
}

/// Total damage as the nominal term `|G| λnorm T` plus the summed
/// supercritical excess, evaluated straight from the velocities.
pub fn total_damage_decomposed<S: VelocitySource + ?Sized>(p: &NhppParams, src: &S) -> f64 {
    let n = src.grid().n_cells() as f64;
    let nominal = p.lambda_norm * src.times().duration();
    n * nominal + excess_rates(p, src).iter().sum::<f64>()
}

/// `max(0, Vm − Vcrit) / Vcrit`.
pub fn g_of_vm(vm: f64, vcrit: f64) -> f64 {
    (vm - vcrit).max(0.0) / vcrit
}

/// Loss per failed asset per hour `Lf` and repair rate `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairParams {
    pub lf: f64,
    /// Assets repaired per hour.
    pub y: f64,
}

impl Default for RepairParams {
    fn default() -> Self {
        RepairParams { lf: 1.0, y: 1.0 }
    }
}

impl RepairParams {
    pub fn new(lf: f64, y: f64) -> Result<Self> {
        let rp = RepairParams { lf, y };
        rp.validate("repair")?;
        Ok(rp)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.lf >= 0.0 && self.lf.is_finite()) {
            return Err(invalid(format!("{field}.lf"), "must be non-negative"));
        }
        if !(self.y > 0.0 && self.y.is_finite()) {
            return Err(invalid(format!("{field}.y"), "must be positive"));
        }
        Ok(())
    }

    fn half_ratio(&self) -> f64 {
        0.5 * self.lf / self.y
    }
}

/// Loss of a cell with `n` failures repaired one after another at rate `Y`:
/// the outstanding count falls as `n − Y t`, so the loss is `½ (Lf/Y) n²`.
pub fn repair_loss_per_cell(n: f64, rp: &RepairParams) -> f64 {
    rp.half_ratio() * n * n
}

/// Second moment used for the failure count of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMoment {
    /// `E[n²] ≈ Λ²`.
    #[default]
    PlugIn,
    /// `E[n²] = Λ + Λ²` for a Poisson count.
    PoissonExact,
}

/// `½ (Lf/Y) Σ_g Λg²`.
pub fn total_loss(fr: &FailureRateField, rp: &RepairParams) -> f64 {
    total_loss_with(fr, rp, LossMoment::PlugIn)
}

pub fn total_loss_with(fr: &FailureRateField, rp: &RepairParams, moment: LossMoment) -> f64 {
    let s: f64 = match moment {
        LossMoment::PlugIn => fr.values.iter().map(|l| l * l).sum(),
        LossMoment::PoissonExact => fr.values.iter().map(|l| l + l * l).sum(),
    };
    rp.half_ratio() * s
}

/// Total loss from the expansion `Σ (N + Eg)² = |G| N² + 2 N Σ Eg + Σ Eg²`
/// with nominal rate `N = λnorm T` and per-cell excess `Eg`.
pub fn total_loss_expanded<S: VelocitySource + ?Sized>(p: &NhppParams, src: &S, rp: &RepairParams) -> f64 {
    let n = src.grid().n_cells() as f64;
    let nominal = p.lambda_norm * src.times().duration();
    let ex = excess_rates(p, src);
    let s1: f64 = ex.iter().sum();
    let s2: f64 = ex.iter().map(|e| e * e).sum();
    rp.half_ratio() * (n * nominal * nominal + 2.0 * nominal * s1 + s2)
}

/// `Σ_g E[min(N, Ng)]` with `N ~ Poisson(ℓg Λg)`.
pub fn total_damage_saturated(fr: &FailureRateField, inventory: &AssetInventory) -> Result<f64> {
    if inventory.lengths.len() != fr.values.len() {
        return Err(invalid(
            "inventory.lengths",
            format!("{} cells, the failure-rate field has {}", inventory.lengths.len(), fr.values.len()),
        ));
    }
    let counts = inventory.counts();
    let parts: Result<Vec<f64>> = fr
        .values
        .par_iter()
        .zip(&inventory.lengths)
        .zip(&counts)
        .map(|((&l, &len), &ng)| expected_failures_saturated(len * l, ng))
        .collect();
    Ok(parts?.iter().sum())
}

/// Normalized totals of one sweep storm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageLossRow {
    pub vm: f64,
    pub rm: f64,
    /// `Λtotal / |G|`.
    pub damage_norm: f64,
    /// `Ltotal / |G|` with `Lf / Y = 1`.
    pub loss_norm: f64,
}

pub fn damage_loss_sweep(spec: &SweepSpec, nhpp: &NhppParams) -> Result<Vec<DamageLossRow>> {
    spec.validate("sweep")?;
    nhpp.validate("nhpp")?;
    let nominal = nhpp.lambda_norm * spec.duration_h;
    spec.pairs()
        .into_par_iter()
        .map(|(vm, rm)| {
            let s = axisymmetric_swath(&spec.params(vm, rm), nhpp, nhpp.vcrit, spec)?;
            Ok(DamageLossRow {
                vm,
                rm,
                damage_norm: nominal + s.excess_sum / spec.n_cells_norm,
                loss_norm: 0.5 * (nominal * nominal + s.excess_sq_sum / spec.n_cells_norm),
            })
        })
        .collect()
}

/// Writes `Vm,Rm,damage_norm,loss_norm`.
pub fn write_damage_loss_csv<W: Write>(rows: &[DamageLossRow], mut w: W, provenance: Option<&str>) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    writeln!(w, "Vm,Rm,damage_norm,loss_norm")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_num(r.vm),
            fmt_num(r.rm),
            fmt_num(r.damage_norm),
            fmt_num(r.loss_norm)
        )?;
    }
    Ok(())
}

/// `lo, lo + step, …, hi`, built from integer multiples so that the same
/// grid is reproduced exactly.
pub fn exponent_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

/// Coefficients of one parametric model after dropping insignificant terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFit {
    /// Coefficient per basis term; zero for dropped terms.
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub kept: Vec<bool>,
    /// RMS residual of the full model at the chosen exponents.
    pub rms_full: f64,
    /// RMS residual after dropping.
    pub rms: f64,
    pub condition_number: f64,
}

/// Significance level for keeping a term.
pub const SIGNIFICANCE: f64 = 0.05;

/// Fits all columns, then refits once on the terms with `p < SIGNIFICANCE`.
fn fit_and_prune(columns: &[Vec<f64>], y: &[f64]) -> Result<TermFit> {
    let full = ols(columns, y)?;
    let kept: Vec<bool> = full.p_values.iter().map(|p| *p < SIGNIFICANCE).collect();
    if kept.iter().all(|k| *k) || kept.iter().all(|k| !*k) {
        return Ok(term_fit(&full, &full, &vec![true; columns.len()]));
    }
    let sub: Vec<Vec<f64>> = columns
        .iter()
        .zip(&kept)
        .filter(|(_, k)| **k)
        .map(|(c, _)| c.clone())
        .collect();
    let reduced = ols(&sub, y)?;
    Ok(term_fit(&full, &reduced, &kept))
}

fn term_fit(full: &OlsFit, reduced: &OlsFit, kept: &[bool]) -> TermFit {
    let mut coef = vec![0.0; kept.len()];
    let mut se = vec![f64::NAN; kept.len()];
    let mut p_values = vec![f64::NAN; kept.len()];
    let mut j = 0;
    for (i, k) in kept.iter().enumerate() {
        if *k {
            coef[i] = reduced.coef[j];
            se[i] = reduced.se[j];
            p_values[i] = reduced.p_values[j];
            j += 1;
        }
    }
    TermFit {
        coef,
        se,
        p_values,
        kept: kept.to_vec(),
        rms_full: full.rms,
        rms: reduced.rms,
        condition_number: full.condition_number,
    }
}

/// Lowest-RMS candidate of a parallel exponent search.
fn best_candidate<F>(candidates: &[Vec<f64>], y: &[f64], basis: F) -> Result<(usize, f64)>
where
    F: Fn(&[f64]) -> Vec<Vec<f64>> + Sync,
{
    let scored: Result<Vec<(usize, f64)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, e)| Ok((i, ols(&basis(e), y)?.rms)))
        .collect();
    scored?
        .into_iter()
        .filter(|(_, r)| r.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| invalid("sweep", "no exponent candidate produced a finite fit"))
}

fn check_rows(rows: &[DamageLossRow], vcrit: f64) -> Result<()> {
    if rows.len() < 20 {
        return Err(invalid("sweep", "too few sweep points for the parametric fit"));
    }
    if rows.iter().any(|r| r.vm <= vcrit) {
        return Err(invalid("sweep.vm_min_mps", "parametric fits need every Vm above Vcrit"));
    }
    Ok(())
}

/// Damage model `β1 + β2 Rm g^p1 + β3 Rm² g^{2p1} + β4 Rm g^p2 + β5 Rm² g^{2p2}`
/// with `g = g_of_vm(Vm)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageFitModel {
    pub p1: f64,
    pub p2: f64,
    pub vcrit: f64,
    pub beta: TermFit,
}

pub fn damage_basis(vm: f64, rm: f64, vcrit: f64, p1: f64, p2: f64) -> [f64; 5] {
    let g = g_of_vm(vm, vcrit);
    let a = g.powf(p1);
    let b = g.powf(p2);
    [1.0, rm * a, rm * rm * a * a, rm * b, rm * rm * b * b]
}

impl DamageFitModel {
    pub fn predict(&self, vm: f64, rm: f64) -> f64 {
        damage_basis(vm, rm, self.vcrit, self.p1, self.p2)
            .iter()
            .zip(&self.beta.coef)
            .map(|(x, c)| x * c)
            .sum()
    }
}

pub const DAMAGE_P1_RANGE: (f64, f64) = (1.0, 1.5);
pub const DAMAGE_P2_RANGE: (f64, f64) = (-0.5, 0.5);
pub const LOSS_P_RANGE: (f64, f64) = (1.2, 2.0);
pub const EXPONENT_STEP: f64 = 0.01;

fn damage_columns(rows: &[DamageLossRow], vcrit: f64, p1: f64, p2: f64) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); 5];
    for r in rows {
        for (c, x) in cols.iter_mut().zip(damage_basis(r.vm, r.rm, vcrit, p1, p2)) {
            c.push(x);
        }
    }
    cols
}

/// Grid search over `(p1, p2)` with a least-squares solve per candidate,
/// then one pruning pass at the chosen exponents.
pub fn fit_damage_model(rows: &[DamageLossRow], vcrit: f64) -> Result<DamageFitModel> {
    check_rows(rows, vcrit)?;
    let p1s = exponent_grid(DAMAGE_P1_RANGE.0, DAMAGE_P1_RANGE.1, EXPONENT_STEP);
    let p2s = exponent_grid(DAMAGE_P2_RANGE.0, DAMAGE_P2_RANGE.1, EXPONENT_STEP);
    let candidates: Vec<Vec<f64>> = p1s
        .iter()
        .flat_map(|&a| p2s.iter().map(move |&b| vec![a, b]))
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.damage_norm).collect();
    let (best, _) = best_candidate(&candidates, &y, |e| damage_columns(rows, vcrit, e[0], e[1]))?;
    let (p1, p2) = (candidates[best][0], candidates[best][1]);
    let beta = fit_and_prune(&damage_columns(rows, vcrit, p1, p2), &y)?;
    Ok(DamageFitModel { p1, p2, vcrit, beta })
}

/// Loss model over the thirteen terms
/// `1, R G, R²G², R³G³, R⁴G⁴, R²G, R³G, R³G², R⁴G², R, R², R³, R⁴`
/// with `R = Rm` and `G = g^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFitModel {
    pub p: f64,
    pub vcrit: f64,
    pub kappa: TermFit,
}

pub fn loss_basis(vm: f64, rm: f64, vcrit: f64, p: f64) -> [f64; 13] {
    let g = g_of_vm(vm, vcrit).powf(p);
    let r = rm;
    let (r2, r3, r4) = (r * r, r * r * r, r * r * r * r);
    [
        1.0,
        r * g,
        r2 * g * g,
        r3 * g * g * g,
        r4 * g * g * g * g,
        r2 * g,
        r3 * g,
        r3 * g * g,
        r4 * g * g,
        r,
        r2,
        r3,
        r4,
    ]
}

impl LossFitModel {
    pub fn predict(&self, vm: f64, rm: f64) -> f64 {
        loss_basis(vm, rm, self.vcrit, self.p)
            .iter()
            .zip(&self.kappa.coef)
            .map(|(x, c)| x * c)
            .sum()
    }
}

fn loss_columns(rows: &[DamageLossRow], vcrit: f64, p: f64) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); 13];
    for r in rows {
        for (c, x) in cols.iter_mut().zip(loss_basis(r.vm, r.rm, vcrit, p)) {
            c.push(x);
        }
    }
    cols
}

pub fn fit_loss_model(rows: &[DamageLossRow], vcrit: f64) -> Result<LossFitModel> {
    check_rows(rows, vcrit)?;
    let candidates: Vec<Vec<f64>> = exponent_grid(LOSS_P_RANGE.0, LOSS_P_RANGE.1, EXPONENT_STEP)
        .into_iter()
        .map(|p| vec![p])
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.loss_norm).collect();
    let (best, _) = best_candidate(&candidates, &y, |e| loss_columns(rows, vcrit, e[0]))?;
    let p = candidates[best][0];
    let kappa = fit_and_prune(&loss_columns(rows, vcrit, p), &y)?;
    Ok(LossFitModel { p, vcrit, kappa })
}

/// Slope and intercept of `ln(value − offset)` against `ln(Vm − Vcrit)` for
/// the rows at `rm` with `Vm` in `[vm_lo, vm_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogSlope {
    pub rm: f64,
    pub slope: f64,
    pub se: f64,
    pub intercept: f64,
    pub n: usize,
}

pub fn loglog_slope(
    points: &[(f64, f64, f64)],
    rm: f64,
    vm_range: (f64, f64),
    vcrit: f64,
    offset: f64,
) -> Result<LogLogSlope> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(vm, r, _)| *r == rm && *vm >= vm_range.0 && *vm <= vm_range.1)
        .map(|&(vm, _, v)| ((vm - vcrit).ln(), (v - offset).ln()))
        .unzip();
    if xs.len() < 3 || ys.iter().any(|y| !y.is_finite()) || xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid("sweep", format!("log-log slope at Rm = {rm} needs three points above Vcrit with positive excess")));
    }
    let n = xs.len();
    let f = ols(&[vec![1.0; n], xs], &ys)?;
    Ok(LogLogSlope {
        rm,
        slope: f.coef[1],
        se: f.se[1],
        intercept: f.coef[0],
        n,
    })
}
