//! Critical radii and zones, swath areas, zone failure statistics and the
//! parametric critical-radius and critical-area fits.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::export::{fmt_num, write_provenance};
use crate::geo_grid::{Grid, TimeAxis};
use crate::lsq::ols;
use crate::nhpp::{failure_rate, failure_rate_field, FailureRateField, Intensity, NhppParams};
use crate::sweep::{axisymmetric_swath, swath_cell_count, SweepSpec};
use crate::wind_field::{outer_radius_at_speed, Hemisphere, HollandParams, StormField, Track, VelocitySource, KMH_PER_MPS};

/// Cells that at some step lie inside `Rm` of the storm centre or see a
/// velocity of at least the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalZone {
    pub cells: Vec<usize>,
    /// `|cells| · cell_area`, km².
    pub area: f64,
    /// Threshold velocity, m/s.
    pub vthres: f64,
}

/// Radius `r >= Rm` at which the profile equals `vthres`, or `None` when the
/// storm never reaches the threshold.
pub fn critical_radius(p: &HollandParams, vthres: f64) -> Result<Option<f64>> {
    outer_radius_at_speed(p, vthres)
}

/// Union over all steps of the per-step critical zones of `field`.
///
/// A storm whose maximum intensity stays below `vthres` has no critical zone;
/// otherwise the eye (inside `Rm` of the centre given by `track`) counts as
/// well as every cell whose velocity reaches `vthres`.
pub fn critical_zone_numeric<S>(field: &S, vthres: f64, p: &HollandParams, track: &Track) -> Result<CriticalZone>
where
    S: VelocitySource + ?Sized,
{
    if !(vthres > 0.0 && vthres.is_finite()) {
        return Err(invalid("v_thres_mps", "must be positive"));
    }
    let grid = *field.grid();
    let times = *field.times();
    if p.vm < vthres {
        return Ok(CriticalZone { cells: Vec::new(), area: 0.0, vthres });
    }
    let floor = field.floor(vthres);
    let cells: Vec<usize> = (0..grid.n_cells())
        .into_par_iter()
        .map_init(
            || vec![0.0; times.n_steps],
            |buf, cell| {
                if !track.steps_within(grid.center(cell), p.rm, &times).is_empty() {
                    return Some(cell);
                }
                field.series_above(cell, &floor, buf);
                buf.iter().any(|&v| v >= vthres).then_some(cell)
            },
        )
        .flatten()
        .collect();
    let area = cells.len() as f64 * grid.cell_area();
    Ok(CriticalZone { cells, area, vthres })
}

/// Area of the disc of radius `rcrit` swept for `t_h` hours at `vtr` m/s:
/// `2 Rcrit T ‖Vtr‖ + π Rcrit²` with the speed in km/h.
pub fn obround_area(rcrit: f64, t_h: f64, vtr: (f64, f64)) -> f64 {
    let length = t_h * vtr.0.hypot(vtr.1) * KMH_PER_MPS;
    2.0 * rcrit * length + std::f64::consts::PI * rcrit * rcrit
}

/// Largest and mean failure rate over a zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneStats {
    pub max: f64,
    pub mean: f64,
    pub n_cells: usize,
}

pub fn zone_failure_stats(fr: &FailureRateField, zone: &CriticalZone) -> Result<ZoneStats> {
    if zone.cells.is_empty() {
        return Err(invalid("zone", "critical zone is empty"));
    }
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &c in &zone.cells {
        let v = *fr
            .values
            .get(c)
            .ok_or_else(|| invalid("zone", format!("cell {c} has no failure rate")))?;
        max = max.max(v);
        sum += v;
    }
    Ok(ZoneStats {
        max,
        mean: sum / zone.cells.len() as f64,
        n_cells: zone.cells.len(),
    })
}

/// Cells whose failure rate exceeds the nominal `λnorm T`.
///
/// The nominal rate is evaluated through the same summation as the field
/// itself, so cells that never see a supercritical step compare equal to it
/// and the test is exact.
pub fn cells_above_nominal<I: Intensity + ?Sized>(fr: &FailureRateField, p: &I, times: &TimeAxis) -> Vec<usize> {
    let nominal = failure_rate(p, &vec![0.0; times.n_steps], times.dt);
    fr.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > nominal)
        .map(|(c, _)| c)
        .collect()
}

/// Storm geometry shared by the table reproductions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: Grid,
    pub times: TimeAxis,
    pub track: Track,
    pub nhpp: NhppParams,
    pub b: f64,
    pub vthres: f64,
    pub hemisphere: Hemisphere,
}

impl Default for Scenario {
    /// A 121 h storm moving north at 3 m/s from the origin, on a 1 km grid
    /// spanning 500 km either side of the track and from 100 km behind the
    /// genesis point to 1200 km north of it.
    fn default() -> Self {
        Scenario {
            grid: Grid {
                origin: (-500.0, -100.0),
                nx: 1000,
                ny: 1300,
                cell_size: 1.0,
            },
            times: TimeAxis::hourly(121),
            track: Track {
                x0: (0.0, 0.0),
                vtr: (0.0, 3.0),
                duration: 121.0,
            },
            nhpp: NhppParams::default(),
            b: 1.0,
            vthres: 20.6,
            hemisphere: Hemisphere::North,
        }
    }
}

/// Zone area and failure-rate statistics of one storm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub vm: f64,
    pub rm: f64,
    pub asymmetric: bool,
    pub area_km2: f64,
    pub max_fr: f64,
    pub mean_fr: f64,
}

pub fn table_entry(scn: &Scenario, vm: f64, rm: f64, asymmetric: bool) -> Result<TableEntry> {
    let p = HollandParams::new(vm, rm, scn.b)?;
    let storm = if asymmetric {
        StormField::asymmetric(scn.track, p, scn.grid, scn.times, scn.hemisphere)?
    } else {
        StormField::axisymmetric(scn.track, p, scn.grid, scn.times)?
    };
    let fr = failure_rate_field(&scn.nhpp, &storm);
    let zone = critical_zone_numeric(&storm, scn.vthres, &p, &scn.track)?;
    let stats = zone_failure_stats(&fr, &zone)?;
    Ok(TableEntry {
        vm,
        rm,
        asymmetric,
        area_km2: zone.area,
        max_fr: stats.max,
        mean_fr: stats.mean,
    })
}

/// Writes `Vm_mps,Rm_km,field,area_km2,maxFR,meanFR`.
pub fn write_tables_csv<W: Write>(rows: &[TableEntry], mut w: W, provenance: Option<&str>) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    writeln!(w, "Vm_mps,Rm_km,field,area_km2,maxFR,meanFR")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_num(r.vm),
            fmt_num(r.rm),
            if r.asymmetric { "asymmetric" } else { "axisymmetric" },
            fmt_num(r.area_km2),
            fmt_num(r.max_fr),
            fmt_num(r.mean_fr)
        )?;
    }
    Ok(())
}

/// One (Vm, Rm) point of the critical-zone sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritSweepRow {
    pub vm: f64,
    pub rm: f64,
    pub rcrit: f64,
    /// Counted at grid resolution.
    pub area_numeric: f64,
    pub area_obround: f64,
    /// On the sweep's quadrature cells.
    pub max_fr: f64,
    pub mean_fr: f64,
}

/// Critical radius, zone areas and zone failure statistics of every sweep
/// point with `Vm >= vthres`.
pub fn critzone_sweep(spec: &SweepSpec, nhpp: &NhppParams, vthres: f64) -> Result<Vec<CritSweepRow>> {
    spec.validate("sweep")?;
    spec.pairs()
        .into_par_iter()
        .filter(|&(vm, _)| vm >= vthres)
        .map(|(vm, rm)| {
            let p = spec.params(vm, rm);
            let rcrit = critical_radius(&p, vthres)?.expect("vm >= vthres");
            let cells = swath_cell_count(rcrit, spec.n_steps(), spec.step_km(), spec.grid_cell_km);
            let swath = axisymmetric_swath(&p, nhpp, vthres, spec)?;
            Ok(CritSweepRow {
                vm,
                rm,
                rcrit,
                area_numeric: cells as f64 * spec.grid_cell_km * spec.grid_cell_km,
                area_obround: obround_area(rcrit, spec.duration_h, (0.0, spec.vtr_mps)),
                max_fr: swath.max_rate,
                mean_fr: swath.mean_zone_rate,
            })
        })
        .collect()
}

/// Writes `Vm_mps,Rm_km,Rcrit_km,Acrit_numeric_km2,Acrit_obround_km2,maxFR,meanFR`.
pub fn write_critzone_sweep_csv<W: Write>(rows: &[CritSweepRow], mut w: W, provenance: Option<&str>) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    writeln!(w, "Vm_mps,Rm_km,Rcrit_km,Acrit_numeric_km2,Acrit_obround_km2,maxFR,meanFR")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_num(r.vm),
            fmt_num(r.rm),
            fmt_num(r.rcrit),
            fmt_num(r.area_numeric),
            fmt_num(r.area_obround),
            fmt_num(r.max_fr),
            fmt_num(r.mean_fr)
        )?;
    }
    Ok(())
}

/// `Rcrit ≈ a1 · Rm · (Vm / Vthres)^a2`, fitted in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritRadiusFit {
    pub a1: f64,
    pub a2: f64,
    /// Standard error of `ln a1`.
    pub se_ln_a1: f64,
    /// Delta-method standard error of `a1`.
    pub se_a1: f64,
    pub se_a2: f64,
    /// RMS error of `ln Rcrit`.
    pub rms_log: f64,
    /// RMS error of `ln Rcrit` for the best `c · Vm^k` law.
    pub rms_log_vm_only: f64,
    pub vm_only_c: f64,
    pub vm_only_k: f64,
    pub n: usize,
}

/// Least-squares fit of `ln(Rcrit/Rm) = ln a1 + a2 ln(Vm/Vthres)` over the
/// given (Vm, Rm) pairs; pairs below the threshold are skipped.
pub fn fit_crit_radius(pairs: &[(f64, f64)], b: f64, vthres: f64) -> Result<CritRadiusFit> {
    let mut points = Vec::with_capacity(pairs.len());
    for &(vm, rm) in pairs {
        let p = HollandParams::new(vm, rm, b)?;
        if let Some(rc) = critical_radius(&p, vthres)? {
            points.push((vm, rm, rc));
        }
    }
    fit_crit_radius_points(&points, vthres)
}

/// Same fit on precomputed `(Vm, Rm, Rcrit)` triples. The comparison law
/// `ln Rcrit = ln c + k ln Vm` is fitted on the same points.
pub fn fit_crit_radius_points(points: &[(f64, f64, f64)], vthres: f64) -> Result<CritRadiusFit> {
    if points.len() < 3 {
        return Err(invalid("sweep", "need at least three supercritical (Vm, Rm) pairs"));
    }
    let n = points.len();
    let xs: Vec<f64> = points.iter().map(|&(vm, _, _)| (vm / vthres).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, rm, rc)| (rc / rm).ln()).collect();
    let ln_vm: Vec<f64> = points.iter().map(|&(vm, _, _)| vm.ln()).collect();
    let ln_rc: Vec<f64> = points.iter().map(|&(_, _, rc)| rc.ln()).collect();
    let f = ols(&[vec![1.0; n], xs], &ys)?;
    let g = ols(&[vec![1.0; n], ln_vm], &ln_rc)?;
    let a1 = f.coef[0].exp();
    Ok(CritRadiusFit {
        a1,
        a2: f.coef[1],
        se_ln_a1: f.se[0],
        se_a1: a1 * f.se[0],
        se_a2: f.se[1],
        // ln Rm enters with a fixed unit coefficient, so the residuals in
        // ln Rcrit equal those in ln(Rcrit / Rm)
        rms_log: f.rms,
        rms_log_vm_only: g.rms,
        vm_only_c: g.coef[0].exp(),
        vm_only_k: g.coef[1],
        n,
    })
}

/// Critical-area law `b1 Rm (Vm/Vthres)^a2 + b2 Rm² (Vm/Vthres)^{2 a2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritAreaFit {
    /// `2 T ‖Vtr‖ a1`, with the speed in km/h.
    pub derived_b1: f64,
    /// `π a1²`.
    pub derived_b2: f64,
    pub free_b1: f64,
    pub free_b2: f64,
    pub se_free_b1: f64,
    pub se_free_b2: f64,
    /// Median relative error of the derived law against the numeric areas.
    pub median_rel_err_derived: f64,
    /// Median relative error of the free fit against the numeric areas.
    pub median_rel_err_free: f64,
    /// Median relative difference between the derived and free predictions.
    pub median_rel_diff_derived_free: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fit_crit_area(rows: &[CritSweepRow], fit: &CritRadiusFit, t_h: f64, vtr_mps: f64, vthres: f64) -> Result<CritAreaFit> {
    if rows.len() < 2 {
        return Err(invalid("sweep", "need at least two sweep rows"));
    }
    let derived_b1 = 2.0 * t_h * vtr_mps * KMH_PER_MPS * fit.a1;
    let derived_b2 = std::f64::consts::PI * fit.a1 * fit.a1;
    let c1: Vec<f64> = rows.iter().map(|r| r.rm * (r.vm / vthres).powf(fit.a2)).collect();
    let c2: Vec<f64> = rows.iter().map(|r| r.rm * r.rm * (r.vm / vthres).powf(2.0 * fit.a2)).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.area_numeric).collect();
    let free = if vtr_mps > 0.0 {
        ols(&[c1.clone(), c2.clone()], &y)?
    } else {
        // a stationary storm has no linear term
        let g = ols(&[c2.clone()], &y)?;
        crate::lsq::OlsFit {
            coef: vec![0.0, g.coef[0]],
            se: vec![0.0, g.se[0]],
            t: vec![f64::NAN, g.t[0]],
            p_values: vec![f64::NAN, g.p_values[0]],
            ..g
        }
    };
    let rel = |b1: f64, b2: f64| {
        median(
            (0..rows.len())
                .map(|i| ((b1 * c1[i] + b2 * c2[i]) / y[i] - 1.0).abs())
                .collect(),
        )
    };
    Ok(CritAreaFit {
        derived_b1,
        derived_b2,
        free_b1: free.coef[0],
        free_b2: free.coef[1],
        se_free_b1: free.se[0],
        se_free_b2: free.se[1],
        median_rel_err_derived: rel(derived_b1, derived_b2),
        median_rel_err_free: rel(free.coef[0], free.coef[1]),
        median_rel_diff_derived_free: median(
            (0..rows.len())
                .map(|i| {
                    let d = derived_b1 * c1[i] + derived_b2 * c2[i];
                    let f = free.coef[0] * c1[i] + free.coef[1] * c2[i];
                    (d / f - 1.0).abs()
                })
                .collect(),
        ),
    })
}
