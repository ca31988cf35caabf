//! Holland radial profiles, straight-line tracks and the wind fields they
//! induce on a grid.
//!
//! [`StormField`] evaluates velocities on demand, which keeps 1 km grids over
//! thousands of kilometres cheap. [`WindField`] is the materialized
//! `[cell × time]` array used for ensembles and file exchange.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::export::{fmt_num, write_provenance};
use crate::geo_grid::{Grid, Point, TimeAxis};

/// Kilometres per hour in one metre per second.
pub const KMH_PER_MPS: f64 = 3.6;

/// Holland profile parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HollandParams {
    /// Maximum intensity, m/s.
    pub vm: f64,
    /// Radius of maximum winds, km.
    pub rm: f64,
    /// Shape parameter.
    pub b: f64,
}

impl HollandParams {
    pub fn new(vm: f64, rm: f64, b: f64) -> Result<Self> {
        let p = HollandParams { vm, rm, b };
        p.validate("holland")?;
        Ok(p)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [("vm_mps", self.vm), ("rm_km", self.rm), ("b", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{field}.{name}"), "must be positive"));
            }
        }
        Ok(())
    }

    /// Profile speed at radius `r` km without argument checks. Zero at the
    /// centre.
    #[inline]
    pub fn speed(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let x = self.rm / r;
        let xb = if self.b == 1.0 { x } else { x.powf(self.b) };
        let amp = if self.b == 1.0 { x.sqrt() } else { x.powf(0.5 * self.b) };
        self.vm * amp * (0.5 * (1.0 - xb)).exp()
    }
}

/// Holland speed `Vm (Rm/r)^(B/2) exp((1 - (Rm/r)^B) / 2)` in m/s.
///
/// Returns 0 at `r = 0` (the limit of the formula) and an error for negative
/// radii.
pub fn holland_speed(p: &HollandParams, r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(invalid("r_km", format!("radius must be non-negative, got {r}")));
    }
    Ok(p.speed(r))
}

/// Radius `r >= Rm` where the profile falls to `v`, found by bisection to
/// within 1e-9 m/s.
///
/// `None` when `v > Vm`; `Rm` when `v == Vm`. The bracket starts at
/// `[Rm, 2 Rm]` and doubles its upper end until the profile is below `v`.
pub fn outer_radius_at_speed(p: &HollandParams, v: f64) -> Result<Option<f64>> {
    const TOL: f64 = 1e-9;
    if !(v > 0.0) {
        return Err(invalid("v_thres_mps", "threshold must be positive"));
    }
    if v > p.vm {
        return Ok(None);
    }
    if v == p.vm {
        return Ok(Some(p.rm));
    }
    let mut lo = p.rm;
    let mut hi = 2.0 * p.rm;
    let mut doublings = 0;
    while p.speed(hi) >= v {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NoConvergence(format!(
                "no radius with speed below {v} m/s"
            )));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let f = p.speed(mid) - v;
        if f.abs() <= TOL {
            return Ok(Some(mid));
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            // The bracket cannot shrink further; accept if within tolerance.
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    if (p.speed(mid) - v).abs() <= TOL {
        Ok(Some(mid))
    } else {
        Err(Error::NoConvergence(format!(
            "bisection for speed {v} m/s stalled at r = {mid} km"
        )))
    }
}

/// Sense of the cyclonic rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    /// Counterclockwise rotation.
    #[default]
    North,
    /// Clockwise rotation.
    South,
}

/// Straight-line storm track moving at a constant translation velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    /// Genesis position, km.
    pub x0: Point,
    /// Translation velocity (east, north), m/s.
    pub vtr: (f64, f64),
    /// Lifetime, hours.
    pub duration: f64,
}

impl Track {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(format!("{field}.duration_h"), "must be positive"));
        }
        if !(self.x0.0.is_finite() && self.x0.1.is_finite()) {
            return Err(invalid(format!("{field}.x0_km"), "must be finite"));
        }
        if !(self.vtr.0.is_finite() && self.vtr.1.is_finite()) {
            return Err(invalid(format!("{field}.vtr_mps"), "must be finite"));
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        self.vtr.0.hypot(self.vtr.1)
    }

    /// Centre position after `elapsed` hours.
    #[inline]
    pub fn position(&self, elapsed: f64) -> Point {
        (
            self.x0.0 + self.vtr.0 * KMH_PER_MPS * elapsed,
            self.x0.1 + self.vtr.1 * KMH_PER_MPS * elapsed,
        )
    }

    /// Steps `k` of `times` at which the centre lies strictly within
    /// `radius` of `point`. The set is an interval because the track is
    /// straight.
    pub fn steps_within(&self, point: Point, radius: f64, times: &TimeAxis) -> Range<usize> {
        let n = times.n_steps;
        let dist = |k: usize| {
            let c = self.position(times.elapsed(k));
            (point.0 - c.0).hypot(point.1 - c.1)
        };
        let u = (
            self.vtr.0 * KMH_PER_MPS * times.dt,
            self.vtr.1 * KMH_PER_MPS * times.dt,
        );
        let uu = u.0 * u.0 + u.1 * u.1;
        if uu == 0.0 {
            return if dist(0) < radius { 0..n } else { 0..0 };
        }
        let d = (point.0 - self.x0.0, point.1 - self.x0.1);
        let du = d.0 * u.0 + d.1 * u.1;
        let dd = d.0 * d.0 + d.1 * d.1;
        let disc = du * du - uu * (dd - radius * radius);
        if disc < 0.0 {
            // Allow for rounding right at the tangent point.
            let k = (du / uu).round();
            if k >= 0.0 && (k as usize) < n && dist(k as usize) < radius {
                let k = k as usize;
                return k..k + 1;
            }
            return 0..0;
        }
        let s = disc.sqrt();
        let lo = ((du - s) / uu).floor().max(0.0);
        let hi = ((du + s) / uu).ceil().min((n - 1) as f64);
        if lo > hi {
            return 0..0;
        }
        let (mut lo, mut hi) = (lo as usize, hi as usize);
        while lo <= hi && dist(lo) >= radius {
            lo += 1;
        }
        while hi >= lo && dist(hi) >= radius {
            if hi == 0 {
                return 0..0;
            }
            hi -= 1;
        }
        if lo > hi {
            0..0
        } else {
            lo..hi + 1
        }
    }
}

/// Threshold hint for [`VelocitySource::series_above`]. Obtain one from
/// [`VelocitySource::floor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floor {
    pub value: f64,
    radius: Option<f64>,
}

/// Anything that can report per-cell velocity time series on a grid.
pub trait VelocitySource: Sync {
    fn grid(&self) -> &Grid;
    fn times(&self) -> &TimeAxis;

    /// Writes the exact velocity of `cell` at every step into `out`.
    fn series_into(&self, cell: usize, out: &mut [f64]);

    /// Prepares a threshold for [`VelocitySource::series_above`].
    fn floor(&self, value: f64) -> Floor {
        Floor {
            value,
            radius: None,
        }
    }

    /// Like [`VelocitySource::series_into`], except that steps whose velocity
    /// is certainly below the floor may be written as 0. Use it wherever only
    /// velocities at or above the floor matter.
    fn series_above(&self, cell: usize, floor: &Floor, out: &mut [f64]) {
        let _ = floor;
        self.series_into(cell, out);
    }
}

/// Lazily evaluated wind field of a single parametric storm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormField {
    pub grid: Grid,
    pub times: TimeAxis,
    pub track: Track,
    pub params: HollandParams,
    pub asymmetric: bool,
    pub hemisphere: Hemisphere,
}

impl StormField {
    pub fn axisymmetric(track: Track, params: HollandParams, grid: Grid, times: TimeAxis) -> Result<Self> {
        Self::build(track, params, grid, times, false, Hemisphere::North)
    }

    pub fn asymmetric(
        track: Track,
        params: HollandParams,
        grid: Grid,
        times: TimeAxis,
        hemisphere: Hemisphere,
    ) -> Result<Self> {
        Self::build(track, params, grid, times, true, hemisphere)
    }

    fn build(
        track: Track,
        params: HollandParams,
        grid: Grid,
        times: TimeAxis,
        asymmetric: bool,
        hemisphere: Hemisphere,
    ) -> Result<Self> {
        grid.validate("grid")?;
        times.validate("times")?;
        track.validate("track")?;
        params.validate("holland")?;
        if times.duration() > track.duration * (1.0 + 1e-12) {
            return Err(invalid(
                "times.n_steps",
                format!(
                    "time axis spans {} h but the track lasts only {} h",
                    times.duration(),
                    track.duration
                ),
            ));
        }
        Ok(StormField {
            grid,
            times,
            track,
            params,
            asymmetric,
            hemisphere,
        })
    }

    /// Velocity at `point` with the storm centred at `center`.
    #[inline]
    pub fn velocity_at(&self, point: Point, center: Point) -> f64 {
        let dx = point.0 - center.0;
        let dy = point.1 - center.1;
        let r = dx.hypot(dy);
        let v = self.params.speed(r);
        if !self.asymmetric || self.track.vtr == (0.0, 0.0) {
            return v;
        }
        let (tx, ty) = if r > 0.0 {
            match self.hemisphere {
                Hemisphere::North => (-dy / r, dx / r),
                Hemisphere::South => (dy / r, -dx / r),
            }
        } else {
            (0.0, 0.0)
        };
        (v * tx + self.track.vtr.0).hypot(v * ty + self.track.vtr.1)
    }

    pub fn velocity(&self, cell: usize, step: usize) -> f64 {
        let c = self.track.position(self.times.elapsed(step));
        self.velocity_at(self.grid.center(cell), c)
    }

    /// Evaluates every cell and step.
    pub fn materialize(&self) -> WindField {
        let n = self.times.n_steps;
        let mut velocities = vec![0.0; self.grid.n_cells() * n];
        velocities
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(cell, out)| self.series_into(cell, out));
        WindField {
            grid: self.grid,
            times: self.times,
            velocities,
        }
    }
}

impl VelocitySource for StormField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn times(&self) -> &TimeAxis {
        &self.times
    }

    fn series_into(&self, cell: usize, out: &mut [f64]) {
        let p = self.grid.center(cell);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.velocity_at(p, self.track.position(self.times.elapsed(k)));
        }
    }

    fn floor(&self, value: f64) -> Floor {
        // The translation vector can add at most its own magnitude.
        let profile_floor = if self.asymmetric {
            value - self.track.speed()
        } else {
            value
        };
        let radius = if profile_floor <= 0.0 {
            None
        } else {
            match outer_radius_at_speed(&self.params, profile_floor) {
                Ok(Some(r)) => Some(r * (1.0 + 1e-9) + 1e-9),
                // The whole profile stays below the floor; the eye region
                // is below it too.
                Ok(None) => Some(0.0),
                Err(_) => None,
            }
        };
        Floor { value, radius }
    }

    fn series_above(&self, cell: usize, floor: &Floor, out: &mut [f64]) {
        let Some(radius) = floor.radius else {
            return self.series_into(cell, out);
        };
        out.fill(0.0);
        let p = self.grid.center(cell);
        for k in self.track.steps_within(p, radius, &self.times) {
            out[k] = self.velocity_at(p, self.track.position(self.times.elapsed(k)));
        }
    }
}

/// Materialized velocities, stored cell-major: `velocities[cell * n_steps + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    pub grid: Grid,
    pub times: TimeAxis,
    pub velocities: Vec<f64>,
}

impl WindField {
    pub fn new(grid: Grid, times: TimeAxis, velocities: Vec<f64>) -> Result<Self> {
        grid.validate("grid")?;
        times.validate("times")?;
        if velocities.len() != grid.n_cells() * times.n_steps {
            return Err(invalid(
                "velocities",
                format!(
                    "expected {} values for {} cells x {} steps, got {}",
                    grid.n_cells() * times.n_steps,
                    grid.n_cells(),
                    times.n_steps,
                    velocities.len()
                ),
            ));
        }
        if let Some(v) = velocities.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid("velocities", format!("velocity {v} is not finite and non-negative")));
        }
        Ok(WindField {
            grid,
            times,
            velocities,
        })
    }

    #[inline]
    pub fn velocity(&self, cell: usize, step: usize) -> f64 {
        self.velocities[cell * self.times.n_steps + step]
    }

    pub fn series(&self, cell: usize) -> &[f64] {
        let n = self.times.n_steps;
        &self.velocities[cell * n..(cell + 1) * n]
    }

    /// Writes `cell_id,time_index,velocity_mps`.
    pub fn write_csv<W: Write>(&self, mut w: W, provenance: Option<&str>) -> Result<()> {
        write_provenance(&mut w, provenance)?;
        writeln!(w, "cell_id,time_index,velocity_mps")?;
        for cell in 0..self.grid.n_cells() {
            for (k, v) in self.series(cell).iter().enumerate() {
                writeln!(w, "{cell},{k},{}", fmt_num(*v))?;
            }
        }
        Ok(())
    }
}

impl VelocitySource for WindField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn times(&self) -> &TimeAxis {
        &self.times
    }

    fn series_into(&self, cell: usize, out: &mut [f64]) {
        out.copy_from_slice(self.series(cell));
    }
}

/// Axisymmetric Holland field along `track`.
pub fn axisymmetric_field(track: &Track, p: &HollandParams, grid: &Grid, times: &TimeAxis) -> Result<WindField> {
    Ok(StormField::axisymmetric(*track, *p, *grid, *times)?.materialize())
}

/// Holland field with the translation vector added to the tangential wind
/// (counterclockwise rotation).
pub fn asymmetric_field(track: &Track, p: &HollandParams, grid: &Grid, times: &TimeAxis) -> Result<WindField> {
    Ok(StormField::asymmetric(*track, *p, *grid, *times, Hemisphere::North)?.materialize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(vm: f64, rm: f64) -> HollandParams {
        HollandParams::new(vm, rm, 1.0).unwrap()
    }

    fn north(speed: f64) -> Track {
        Track {
            x0: (0.0, 0.0),
            vtr: (0.0, speed),
            duration: 24.0,
        }
    }

    // Independent closed form for B = 1.
    fn holland_b1(vm: f64, rm: f64, r: f64) -> f64 {
        vm * (rm / r).sqrt() * (0.5 - 0.5 * rm / r).exp()
    }

    #[test]
    fn holland_examples() {
        assert_relative_eq!(holland_speed(&p(37.0, 30.0), 30.0).unwrap(), 37.0, max_relative = 1e-15);
        let v40 = holland_speed(&p(25.0, 20.0), 40.0).unwrap();
        assert_relative_eq!(v40, 25.0 * 0.5f64.sqrt() * 0.25f64.exp(), max_relative = 1e-14);
        assert!((v40 - 22.70).abs() < 0.005);
        assert!(holland_speed(&p(25.0, 20.0), 1e9).unwrap() < 0.01);
        assert_eq!(holland_speed(&p(25.0, 20.0), 0.0).unwrap(), 0.0);
        assert!(holland_speed(&p(25.0, 20.0), -1.0).is_err());
    }

    #[test]
    fn general_shape_parameter() {
        let q = HollandParams::new(40.0, 25.0, 1.7).unwrap();
        let r = 60.0;
        let x: f64 = 25.0 / r;
        assert_relative_eq!(q.speed(r), 40.0 * x.powf(0.85) * (0.5 * (1.0 - x.powf(1.7))).exp(), max_relative = 1e-14);
    }

    #[test]
    fn peak_at_rm_by_dense_sampling() {
        for (vm, rm, b) in [(25.0, 20.0, 1.0), (46.0, 40.0, 1.5), (60.0, 15.0, 2.4)] {
            let q = HollandParams::new(vm, rm, b).unwrap();
            let (mut best_r, mut best_v) = (0.0, -1.0);
            for k in 1..200_000 {
                let r = k as f64 * 0.001;
                let v = q.speed(r);
                if v > best_v {
                    best_v = v;
                    best_r = r;
                }
            }
            assert!((best_r - rm).abs() <= 0.001, "{best_r} vs {rm}");
            assert!(best_v <= vm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn outer_radius() {
        let q = p(25.0, 20.0);
        let r = outer_radius_at_speed(&q, 20.6).unwrap().unwrap();
        assert!((holland_b1(25.0, 20.0, r) - 20.6).abs() <= 1e-9);
        assert!(r > 20.0 && (r - 56.0).abs() < 0.5);
        assert_eq!(outer_radius_at_speed(&q, 25.0).unwrap(), Some(20.0));
        assert_eq!(outer_radius_at_speed(&q, 30.0).unwrap(), None);
        // far tail needs many doublings
        let far = outer_radius_at_speed(&p(80.0, 50.0), 20.6).unwrap().unwrap();
        assert!((p(80.0, 50.0).speed(far) - 20.6).abs() <= 1e-9);
    }

    #[test]
    fn steps_within_matches_brute_force() {
        let times = TimeAxis::hourly(30);
        for (vtr, pt, radius) in [
            ((0.0, 3.0), (5.0, 40.0), 20.0),
            ((2.0, -1.0), (30.0, -10.0), 12.0),
            ((0.0, 0.0), (3.0, 4.0), 5.0),
            ((0.0, 0.0), (3.0, 4.0), 5.1),
            ((0.0, 3.0), (0.0, -50.0), 10.0),
            ((0.0, 3.0), (15.0, 40.0), 15.0),
        ] {
            let track = Track { x0: (0.0, 0.0), vtr, duration: 30.0 };
            let got = track.steps_within(pt, radius, &times);
            let want: Vec<usize> = (0..30)
                .filter(|&k| {
                    let c = track.position(k as f64);
                    (pt.0 - c.0).hypot(pt.1 - c.1) < radius
                })
                .collect();
            assert_eq!(got.collect::<Vec<_>>(), want, "{vtr:?} {pt:?} {radius}");
        }
    }

    #[test]
    fn field_examples() {
        let grid = Grid::new((-40.5, -40.5), 81, 81, 1.0).unwrap();
        let times = TimeAxis::hourly(1);
        let q = p(37.0, 30.0);
        let f = axisymmetric_field(&north(3.0), &q, &grid, &times).unwrap();
        let id = |i: usize, j: usize| j * 81 + i;
        // centre cell (40, 40) sits on the storm centre
        assert_eq!(f.velocity(id(40, 40), 0), 0.0);
        assert_relative_eq!(f.velocity(id(70, 40), 0), 37.0, max_relative = 1e-14);
        assert_eq!(f.velocity(id(70, 40), 0), f.velocity(id(40, 10), 0));

        let a = asymmetric_field(&north(3.0), &q, &grid, &times).unwrap();
        assert_relative_eq!(a.velocity(id(70, 40), 0), 40.0, max_relative = 1e-14);
        assert_relative_eq!(a.velocity(id(10, 40), 0), 34.0, max_relative = 1e-14);
        // the calm eye picks up the translation speed
        assert_relative_eq!(a.velocity(id(40, 40), 0), 3.0, max_relative = 1e-14);

        let still = asymmetric_field(&north(0.0), &q, &grid, &times).unwrap();
        assert_eq!(still, f);
    }

    #[test]
    fn southern_hemisphere_mirrors() {
        let grid = Grid::new((-40.5, -0.5), 81, 1, 1.0).unwrap();
        let times = TimeAxis::hourly(1);
        let s = StormField::asymmetric(north(3.0), p(37.0, 30.0), grid, times, Hemisphere::South).unwrap();
        assert_relative_eq!(s.velocity(10, 0), 40.0, max_relative = 1e-14);
        assert_relative_eq!(s.velocity(70, 0), 34.0, max_relative = 1e-14);
    }

    #[test]
    fn track_shorter_than_axis_is_rejected() {
        let grid = Grid::new((0.0, 0.0), 2, 2, 1.0).unwrap();
        let err = StormField::axisymmetric(north(3.0), p(30.0, 20.0), grid, TimeAxis::hourly(25)).unwrap_err();
        assert!(err.to_string().contains("times.n_steps"));
    }

    #[test]
    fn series_above_agrees_where_it_matters() {
        let grid = Grid::new((-150.0, -150.0), 60, 90, 5.0).unwrap();
        let times = TimeAxis::hourly(24);
        for asym in [false, true] {
            let f = StormField::build(north(3.0), p(40.0, 25.0), grid, times, asym, Hemisphere::North).unwrap();
            let floor = f.floor(20.6);
            let mut exact = vec![0.0; 24];
            let mut fast = vec![0.0; 24];
            for cell in 0..grid.n_cells() {
                f.series_into(cell, &mut exact);
                f.series_above(cell, &floor, &mut fast);
                for k in 0..24 {
                    if exact[k] >= 20.6 || fast[k] != 0.0 {
                        assert_eq!(exact[k], fast[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_export() {
        let grid = Grid::new((0.0, 0.0), 2, 1, 1.0).unwrap();
        let f = WindField::new(grid, TimeAxis::hourly(2), vec![1.0, 2.5, 0.0, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, Some("abc")).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "# config_sha256=abc\ncell_id,time_index,velocity_mps\n0,0,1\n0,1,2.5\n1,0,0\n1,1,0.333333333\n"
        );
        assert!(WindField::new(grid, TimeAxis::hourly(2), vec![1.0; 3]).is_err());
        assert!(WindField::new(grid, TimeAxis::hourly(1), vec![-1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn rotation_invariance(vm in 21.0..80.0f64, rm in 10.0..60.0f64, r in 0.5..300.0f64, theta in 0.0..std::f64::consts::TAU) {
            let track = Track { x0: (0.0, 0.0), vtr: (0.0, 3.0), duration: 1.0 };
            let grid = Grid::new((0.0, 0.0), 1, 1, 1.0).unwrap();
            let f = StormField::axisymmetric(track, p(vm, rm), grid, TimeAxis::hourly(1)).unwrap();
            let a = f.velocity_at((r, 0.0), (0.0, 0.0));
            let b = f.velocity_at((r * theta.cos(), r * theta.sin()), (0.0, 0.0));
            prop_assert!((a - b).abs() <= 1e-9);
            prop_assert!((a - holland_b1(vm, rm, r)).abs() <= 1e-9 * vm);
        }

        #[test]
        fn decreasing_beyond_rm(vm in 21.0..80.0f64, rm in 10.0..60.0f64, b in 0.5..2.5f64, d1 in 0.0..500.0f64, d2 in 1e-3..500.0f64) {
            let q = HollandParams::new(vm, rm, b).unwrap();
            prop_assert!(q.speed(rm + d1) > q.speed(rm + d1 + d2));
        }

        #[test]
        fn asymmetric_peak_is_ninety_degrees_clockwise(
            vm in 21.0..80.0f64, rm in 10.0..60.0f64, r in 1.0..300.0f64,
            heading in 0.0..std::f64::consts::TAU, speed in 0.5..10.0f64,
        ) {
            let vtr = (speed * heading.sin(), speed * heading.cos());
            let track = Track { x0: (0.0, 0.0), vtr, duration: 1.0 };
            let grid = Grid::new((0.0, 0.0), 1, 1, 1.0).unwrap();
            let f = StormField::asymmetric(track, p(vm, rm), grid, TimeAxis::hourly(1), Hemisphere::North).unwrap();
            let n = 720;
            let step = std::f64::consts::TAU / n as f64;
            let (mut best_k, mut best_v) = (0, -1.0);
            for k in 0..n {
                let phi = k as f64 * step;
                let v = f.velocity_at((r * phi.cos(), r * phi.sin()), (0.0, 0.0));
                if v > best_v { best_v = v; best_k = k; }
            }
            // direction of travel rotated 90 degrees clockwise
            let target_angle = (-vtr.0).atan2(vtr.1).rem_euclid(std::f64::consts::TAU);
            let diff = (best_k as f64 * step - target_angle).rem_euclid(std::f64::consts::TAU);
            let diff = diff.min(std::f64::consts::TAU - diff);
            prop_assert!(diff <= step * 1.0001, "peak {} vs {}", best_k as f64 * step, target_angle);
            prop_assert!(best_v.is_finite() && best_v >= 0.0);
        }

        #[test]
        fn fields_finite_nonnegative(vm in 1.0..90.0f64, rm in 1.0..80.0f64, vx in -8.0..8.0f64, vy in -8.0..8.0f64) {
            let grid = Grid::new((-30.0, -30.0), 12, 12, 5.0).unwrap();
            let track = Track { x0: (0.0, 0.0), vtr: (vx, vy), duration: 6.0 };
            let f = StormField::asymmetric(track, p(vm, rm), grid, TimeAxis::hourly(6), Hemisphere::North).unwrap().materialize();
            prop_assert!(f.velocities.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
