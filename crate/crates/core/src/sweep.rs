//! Fast evaluation of axisymmetric straight-line storms over (Vm, Rm) sweeps.
//!
//! A sweep covers storms whose footprints reach thousands of kilometres, so
//! two shortcuts replace full 1 km grids:
//!
//! * zone areas are counted exactly at grid resolution row by row, since each
//!   row of a union of discs along a straight track is one interval;
//! * failure-rate sums use storm-scaled quadrature cells (`Rm / quad_per_rm`)
//!   on one quarter of the swath, which is symmetric about the track and
//!   about its midpoint.
//!
//! Both are checked against brute-force grids in the tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nhpp::NhppParams;
use crate::wind_field::{outer_radius_at_speed, HollandParams, KMH_PER_MPS};

/// Parameter grid and storm settings shared by all sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub vm_min_mps: f64,
    pub vm_max_mps: f64,
    pub vm_step_mps: f64,
    pub rm_min_km: f64,
    pub rm_max_km: f64,
    pub rm_step_km: f64,
    /// Storm lifetime `T`, hours.
    pub duration_h: f64,
    pub dt_h: f64,
    /// Translation speed, m/s.
    pub vtr_mps: f64,
    pub b: f64,
    /// Number of grid cells `|G|` the totals are normalized by.
    pub n_cells_norm: f64,
    /// Side of one grid cell, km.
    pub grid_cell_km: f64,
    /// Quadrature cells per radius of maximum winds.
    pub quad_per_rm: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            vm_min_mps: 21.0,
            vm_max_mps: 80.0,
            vm_step_mps: 1.0,
            rm_min_km: 20.0,
            rm_max_km: 50.0,
            rm_step_km: 1.0,
            duration_h: 24.0,
            dt_h: 1.0,
            vtr_mps: 3.0,
            b: 1.0,
            n_cells_norm: 1000.0,
            grid_cell_km: 1.0,
            quad_per_rm: 4.0,
        }
    }
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

impl SweepSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = [
            ("vm_min_mps", self.vm_min_mps),
            ("vm_step_mps", self.vm_step_mps),
            ("rm_min_km", self.rm_min_km),
            ("rm_step_km", self.rm_step_km),
            ("duration_h", self.duration_h),
            ("dt_h", self.dt_h),
            ("b", self.b),
            ("n_cells_norm", self.n_cells_norm),
            ("grid_cell_km", self.grid_cell_km),
            ("quad_per_rm", self.quad_per_rm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{field}.{name}"), "must be positive"));
            }
        }
        if !(self.vtr_mps >= 0.0 && self.vtr_mps.is_finite()) {
            return Err(invalid(format!("{field}.vtr_mps"), "must be non-negative"));
        }
        if self.vm_max_mps < self.vm_min_mps {
            return Err(invalid(format!("{field}.vm_max_mps"), "must not be below vm_min_mps"));
        }
        if self.rm_max_km < self.rm_min_km {
            return Err(invalid(format!("{field}.rm_max_km"), "must not be below rm_min_km"));
        }
        let n = self.duration_h / self.dt_h;
        if (n - n.round()).abs() > 1e-9 {
            return Err(invalid(format!("{field}.duration_h"), "must be a whole number of steps"));
        }
        Ok(())
    }

    pub fn vm_values(&self) -> Vec<f64> {
        steps(self.vm_min_mps, self.vm_max_mps, self.vm_step_mps)
    }

    pub fn rm_values(&self) -> Vec<f64> {
        steps(self.rm_min_km, self.rm_max_km, self.rm_step_km)
    }

    /// All (Vm, Rm) pairs, Vm-major.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let rms = self.rm_values();
        self.vm_values()
            .into_iter()
            .flat_map(|vm| rms.iter().map(move |&rm| (vm, rm)))
            .collect()
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_h / self.dt_h).round() as usize
    }

    /// Distance the centre moves per step, km.
    pub fn step_km(&self) -> f64 {
        self.vtr_mps * KMH_PER_MPS * self.dt_h
    }

    pub fn params(&self, vm: f64, rm: f64) -> HollandParams {
        HollandParams { vm, rm, b: self.b }
    }
}

/// Cells of side `cell` whose centre lies within `radius` (inclusive) of any
/// of `n_steps` centres spaced `step` apart along a line.
///
/// The grid has a cell corner on the first centre, matching a grid whose
/// origin sits on integer coordinates and a track starting at the origin.
pub fn swath_cell_count(radius: f64, n_steps: usize, step: f64, cell: f64) -> u64 {
    if radius <= 0.0 || n_steps == 0 {
        return 0;
    }
    let span = step * (n_steps - 1) as f64;
    let j_lo = ((-radius) / cell - 0.5).floor() as i64 - 1;
    let j_hi = ((span + radius) / cell - 0.5).ceil() as i64 + 1;
    let mut count = 0u64;
    for j in j_lo..=j_hi {
        let y = (j as f64 + 0.5) * cell;
        // nearest centre along the track
        let k = if step > 0.0 {
            (y / step).round().clamp(0.0, (n_steps - 1) as f64)
        } else {
            0.0
        };
        // the nearest centre gives the widest chord, but rounding at the
        // midpoint between two centres can pick either; check both
        let mut w2 = f64::NEG_INFINITY;
        for kk in [k - 1.0, k, k + 1.0] {
            if kk < 0.0 || kk > (n_steps - 1) as f64 {
                continue;
            }
            let dy = y - kk * step;
            w2 = w2.max(radius * radius - dy * dy);
        }
        if w2 < 0.0 {
            continue;
        }
        let w = w2.sqrt();
        // centres at ±(i + 0.5) cell with (i + 0.5) cell <= w
        let per_side = ((w / cell) - 0.5).floor() as i64 + 1;
        if per_side > 0 {
            count += 2 * per_side as u64;
        }
    }
    count
}

/// Failure-rate statistics of one storm integrated over the whole plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwathSummary {
    /// `Σ_g (Λg − λnorm T)` in grid-cell units.
    pub excess_sum: f64,
    /// `Σ_g (Λg² − (λnorm T)²)` in grid-cell units.
    pub excess_sq_sum: f64,
    /// Largest `Λg` on the quadrature grid.
    pub max_rate: f64,
    /// Mean `Λg` over quadrature cells in the critical zone.
    pub mean_zone_rate: f64,
    /// Zone area on the quadrature grid, km².
    pub zone_area_quadrature: f64,
}

/// Integrates the failure rate of an axisymmetric storm on the quarter
/// quadrature grid.
pub fn axisymmetric_swath(p: &HollandParams, nhpp: &NhppParams, vthres: f64, spec: &SweepSpec) -> Result<SwathSummary> {
    let n = spec.n_steps();
    let step = spec.step_km();
    let half_span = 0.5 * step * (n - 1) as f64;
    let c = p.rm / spec.quad_per_rm;
    let weight = 4.0 * c * c / (spec.grid_cell_km * spec.grid_cell_km);
    let r_exceed = outer_radius_at_speed(p, nhpp.vcrit)?.unwrap_or(0.0);
    let r_zone = if p.vm >= vthres {
        outer_radius_at_speed(p, vthres)?.unwrap_or(p.rm).max(p.rm)
    } else {
        0.0
    };
    let reach = r_exceed.max(r_zone);
    let nominal = nhpp.lambda_norm * spec.duration_h;
    let scale = nhpp.lambda_norm * nhpp.alpha * spec.dt_h;

    let nx = (reach / c).ceil() as usize + 1;
    let ny = ((half_span + reach) / c).ceil() as usize + 1;
    // centres relative to the track midpoint
    let centres: Vec<f64> = (0..n).map(|k| k as f64 * step - half_span).collect();

    struct Acc {
        ex: f64,
        ex2: f64,
        max: f64,
        zone_sum: f64,
        zone_n: f64,
    }
    let rows: Vec<Acc> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let y = (j as f64 + 0.5) * c;
            let mut acc = Acc { ex: 0.0, ex2: 0.0, max: 0.0, zone_sum: 0.0, zone_n: 0.0 };
            for i in 0..nx {
                let x = (i as f64 + 0.5) * c;
                let mut ex = 0.0;
                let mut dmin = f64::INFINITY;
                for &yc in &centres {
                    let dy = y - yc;
                    let r = x.hypot(dy);
                    dmin = dmin.min(r);
                    if r < r_exceed {
                        let s = p.speed(r) / nhpp.vcrit;
                        if s >= 1.0 {
                            ex += s * s - 1.0;
                        }
                    }
                }
                let ex = ex * scale;
                let rate = nominal + ex;
                acc.ex += ex;
                acc.ex2 += 2.0 * nominal * ex + ex * ex;
                acc.max = acc.max.max(rate);
                if r_zone > 0.0 && (dmin <= r_zone || dmin < p.rm) {
                    acc.zone_sum += rate;
                    acc.zone_n += 1.0;
                }
            }
            acc
        })
        .collect();

    let (mut ex, mut ex2, mut max, mut zs, mut zn) = (0.0, 0.0, nominal, 0.0, 0.0);
    for a in rows {
        ex += a.ex;
        ex2 += a.ex2;
        max = max.max(a.max);
        zs += a.zone_sum;
        zn += a.zone_n;
    }
    Ok(SwathSummary {
        excess_sum: ex * weight,
        excess_sq_sum: ex2 * weight,
        max_rate: max,
        mean_zone_rate: if zn > 0.0 { zs / zn } else { 0.0 },
        zone_area_quadrature: zn * 4.0 * c * c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical_zone::critical_zone_numeric;
    use crate::geo_grid::{Grid, TimeAxis};
    use crate::nhpp::failure_rate_field;
    use crate::wind_field::{StormField, Track};

    fn storm_grid(radius: f64, span: f64) -> Grid {
        let m = radius.ceil() + 3.0;
        Grid::new((-m, -m), (2.0 * m) as usize, (2.0 * m + span.ceil()) as usize, 1.0).unwrap()
    }

    #[test]
    fn pairs_cover_the_sweep() {
        let s = SweepSpec::default();
        assert_eq!(s.vm_values().len(), 60);
        assert_eq!(s.rm_values().len(), 31);
        assert_eq!(s.pairs().len(), 1860);
        assert_eq!(s.pairs()[0], (21.0, 20.0));
        assert_eq!(s.pairs()[1859], (80.0, 50.0));
        assert_eq!(s.n_steps(), 24);
    }

    #[test]
    fn counted_area_matches_brute_force_zone() {
        let nhpp = NhppParams::default();
        for (vm, rm, n, vtr) in [(25.0, 20.0, 24, 3.0), (33.0, 12.0, 10, 5.0), (28.0, 15.0, 6, 0.0)] {
            let p = HollandParams::new(vm, rm, 1.0).unwrap();
            let r = outer_radius_at_speed(&p, nhpp.vcrit).unwrap().unwrap();
            let step = vtr * 3.6;
            let grid = storm_grid(r, step * n as f64);
            let times = TimeAxis::hourly(n);
            let track = Track { x0: (0.0, 0.0), vtr: (0.0, vtr), duration: n as f64 };
            let storm = StormField::axisymmetric(track, p, grid, times).unwrap();
            let zone = critical_zone_numeric(&storm, nhpp.vcrit, &p, &track).unwrap();
            assert_eq!(swath_cell_count(r, n, step, 1.0), zone.cells.len() as u64, "{vm} {rm}");
        }
    }

    #[test]
    fn quadrature_matches_fine_grid() {
        let nhpp = NhppParams::default();
        let spec = SweepSpec { duration_h: 8.0, ..SweepSpec::default() };
        let p = HollandParams::new(30.0, 20.0, 1.0).unwrap();
        let q = axisymmetric_swath(&p, &nhpp, nhpp.vcrit, &spec).unwrap();

        // 0.5 km brute force, centred on the track midpoint like the quadrature
        let r = outer_radius_at_speed(&p, nhpp.vcrit).unwrap().unwrap();
        let half = 0.5 * spec.step_km() * 7.0;
        let m = (r + 2.0).ceil();
        let cell = 0.5;
        let grid = Grid::new((-m, -m - half), (2.0 * m / cell) as usize, ((2.0 * m + 2.0 * half) / cell) as usize, cell).unwrap();
        let track = Track { x0: (0.0, -half), vtr: (0.0, spec.vtr_mps), duration: 8.0 };
        let storm = StormField::axisymmetric(track, p, grid, TimeAxis::hourly(8)).unwrap();
        let fr = failure_rate_field(&nhpp, &storm);
        let nominal = nhpp.lambda_norm * 8.0;
        let area_per_cell = cell * cell;
        let ex: f64 = fr.values.iter().map(|v| v - nominal).sum::<f64>() * area_per_cell;
        let ex2: f64 = fr.values.iter().map(|v| v * v - nominal * nominal).sum::<f64>() * area_per_cell;
        let max = fr.values.iter().cloned().fold(0.0, f64::max);
        assert!((q.excess_sum / ex - 1.0).abs() < 0.01, "{} vs {ex}", q.excess_sum);
        assert!((q.excess_sq_sum / ex2 - 1.0).abs() < 0.02, "{} vs {ex2}", q.excess_sq_sum);
        assert!((q.max_rate / max - 1.0).abs() < 0.03, "{} vs {max}", q.max_rate);
    }

    #[test]
    fn radial_integral_oracle() {
        // With a single step the excess sum is the plane integral of the
        // excess intensity around one centre.
        let nhpp = NhppParams::default();
        let spec = SweepSpec { duration_h: 1.0, quad_per_rm: 16.0, ..SweepSpec::default() };
        for (vm, rm) in [(25.0, 20.0), (46.0, 40.0), (80.0, 35.0)] {
            let p = HollandParams::new(vm, rm, 1.0).unwrap();
            let q = axisymmetric_swath(&p, &nhpp, nhpp.vcrit, &spec).unwrap();
            let r = outer_radius_at_speed(&p, nhpp.vcrit).unwrap().unwrap();
            let n = 200_000;
            let dr = r / n as f64;
            let mut integral = 0.0;
            for k in 0..n {
                let rr = (k as f64 + 0.5) * dr;
                let s = p.speed(rr) / nhpp.vcrit;
                if s > 1.0 {
                    integral += 2.0 * std::f64::consts::PI * rr * (s * s - 1.0) * dr;
                }
            }
            let want = nhpp.lambda_norm * nhpp.alpha * integral;
            assert!((q.excess_sum / want - 1.0).abs() < 2e-3, "{vm} {rm}: {} vs {want}", q.excess_sum);
        }
    }
}
