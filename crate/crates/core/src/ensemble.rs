//! Wind-field ensembles: a seeded synthetic generator, ensemble means and a
//! file format that also accepts externally produced ensembles.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, parse_err, Result};
use crate::export::{fmt_num, write_provenance};
use crate::geo_grid::{Grid, TimeAxis};
use crate::wind_field::{Hemisphere, HollandParams, StormField, Track, WindField};

/// Equally weighted wind fields sharing one grid and time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<WindField>,
}

impl Ensemble {
    pub fn new(members: Vec<WindField>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(invalid("ensemble", "no members"));
        };
        for (i, m) in members.iter().enumerate() {
            if m.grid != first.grid || m.times != first.times {
                return Err(invalid(
                    format!("ensemble.members[{i}]"),
                    "grid or time axis differs from member 0",
                ));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[WindField] {
        &self.members
    }

    /// Number of members `H`.
    pub fn h(&self) -> usize {
        self.members.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.members[0].grid
    }

    pub fn times(&self) -> &TimeAxis {
        &self.members[0].times
    }
}

/// Gaussian perturbations applied once per member around a base storm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePerturbationSpec {
    pub base_track: Track,
    pub base_params: HollandParams,
    /// Standard deviation of each genesis coordinate, km.
    pub sigma_track: f64,
    /// Standard deviation of the heading, degrees.
    pub sigma_heading: f64,
    pub sigma_vm: f64,
    pub sigma_rm: f64,
    pub seed: u64,
    pub h: usize,
    pub asymmetric: bool,
    #[serde(default)]
    pub hemisphere: Hemisphere,
}

impl EnsemblePerturbationSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        self.base_track.validate("track")?;
        self.base_params.validate("holland")?;
        for (name, v) in [
            ("sigma_track_km", self.sigma_track),
            ("sigma_heading_deg", self.sigma_heading),
            ("sigma_vm_mps", self.sigma_vm),
            ("sigma_rm_km", self.sigma_rm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{field}.{name}"), "must be non-negative"));
            }
        }
        if self.h == 0 {
            return Err(invalid(format!("{field}.h"), "must be at least 1"));
        }
        Ok(())
    }

    /// Track and Holland parameters of member `i`. Member `i` always draws
    /// from ChaCha8 stream `i` of the seed, so the result does not depend on
    /// which thread generates it.
    pub fn member(&self, i: usize) -> (Track, HollandParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut z = || std.sample(&mut rng);
        let (zx, zy, zh, zv, zr) = (z(), z(), z(), z(), z());

        let mut track = self.base_track;
        track.x0.0 += self.sigma_track * zx;
        track.x0.1 += self.sigma_track * zy;
        let turn = (self.sigma_heading * zh).to_radians();
        if turn != 0.0 {
            let (s, c) = turn.sin_cos();
            let (vx, vy) = track.vtr;
            track.vtr = (c * vx - s * vy, s * vx + c * vy);
        }
        let params = HollandParams {
            vm: (self.base_params.vm + self.sigma_vm * zv).max(1.0),
            rm: (self.base_params.rm + self.sigma_rm * zr).max(1.0),
            b: self.base_params.b,
        };
        (track, params)
    }
}

/// Draws `spec.h` members with independent perturbations of genesis,
/// heading, `Vm` and `Rm`. Identical spec and seed give bit-identical
/// ensembles.
pub fn generate_synthetic_ensemble(spec: &EnsemblePerturbationSpec, grid: &Grid, times: &TimeAxis) -> Result<Ensemble> {
    spec.validate("ensemble")?;
    let members = (0..spec.h)
        .into_par_iter()
        .map(|i| {
            let (track, params) = spec.member(i);
            let f = if spec.asymmetric {
                StormField::asymmetric(track, params, *grid, *times, spec.hemisphere)?
            } else {
                StormField::axisymmetric(track, params, *grid, *times)?
            };
            Ok(f.materialize())
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// Ensemble-mean velocity per (cell, time), cell-major. Members are summed in
/// index order.
pub fn mean_velocity(e: &Ensemble) -> Vec<f64> {
    let n = e.members[0].velocities.len();
    (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; e.h()],
            |buf, k| {
                for (b, m) in buf.iter_mut().zip(&e.members) {
                    *b = m.velocities[k];
                }
                ordered_mean(buf)
            },
        )
        .collect()
}

/// Mean velocity of one cell over time.
pub fn mean_series(e: &Ensemble, cell: usize) -> Vec<f64> {
    let mut buf = vec![0.0; e.h()];
    (0..e.times().n_steps)
        .map(|t| {
            for (b, m) in buf.iter_mut().zip(&e.members) {
                *b = m.velocity(cell, t);
            }
            ordered_mean(&buf)
        })
        .collect()
}

/// Mean of `xs` summed in order. A constant sequence averages to itself
/// exactly, so degenerate ensembles reproduce their member values bit for bit.
pub fn ordered_mean(xs: &[f64]) -> f64 {
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return first;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    #[serde(rename = "H")]
    h: usize,
    nx: usize,
    ny: usize,
    cell_size_km: f64,
    n_steps: usize,
    dt_h: f64,
    #[serde(default)]
    origin_km: (f64, f64),
    #[serde(default)]
    t0_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
}

/// Path of the JSON sidecar that accompanies an ensemble CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `member,cell_id,time_index,velocity_mps` to `path` and the grid
/// description to the sidecar next to it.
pub fn save_ensemble(e: &Ensemble, path: impl AsRef<Path>, provenance: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let g = e.grid();
    let t = e.times();
    let side = Sidecar {
        h: e.h(),
        nx: g.nx,
        ny: g.ny,
        cell_size_km: g.cell_size,
        n_steps: t.n_steps,
        dt_h: t.dt,
        origin_km: g.origin,
        t0_h: t.t0,
        config_sha256: provenance.map(str::to_string),
    };
    let mut js = serde_json::to_string_pretty(&side)?;
    js.push('\n');
    std::fs::write(sidecar_path(path), js)?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_provenance(&mut w, provenance)?;
    writeln!(w, "member,cell_id,time_index,velocity_mps")?;
    for (i, m) in e.members.iter().enumerate() {
        for cell in 0..g.n_cells() {
            for (k, v) in m.series(cell).iter().enumerate() {
                writeln!(w, "{i},{cell},{k},{}", fmt_num(*v))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an ensemble written by [`save_ensemble`] or produced elsewhere in
/// the same format. Rows may come in any order; every (member, cell, time)
/// must appear exactly once.
pub fn load_ensemble(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let side_path = sidecar_path(path);
    let side: Sidecar = serde_json::from_slice(&std::fs::read(&side_path)?)
        .map_err(|e| parse_err(side_path.display().to_string(), e.line() as u64, e.to_string()))?;
    if side.h == 0 {
        return Err(parse_err(&shown, 0, "no members"));
    }
    let grid = Grid::new(side.origin_km, side.nx, side.ny, side.cell_size_km)
        .map_err(|e| parse_err(side_path.display().to_string(), 0, e.to_string()))?;
    let times = TimeAxis::new(side.t0_h, side.n_steps, side.dt_h)
        .map_err(|e| parse_err(side_path.display().to_string(), 0, e.to_string()))?;

    let (nc, nt) = (grid.n_cells(), times.n_steps);
    let per_member = nc * nt;
    let mut vel = vec![0.0; side.h * per_member];
    let mut seen = vec![false; side.h * per_member];

    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut header_seen = false;
    let mut rows = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != "member,cell_id,time_index,velocity_mps" {
                return Err(parse_err(&shown, line_no, "expected header member,cell_id,time_index,velocity_mps"));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(&shown, line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let int = |s: &str, what: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| parse_err(&shown, line_no, format!("bad {what} {s:?}")))
        };
        let member = int(fields[0], "member")?;
        let cell = int(fields[1], "cell_id")?;
        let t = int(fields[2], "time_index")?;
        let v: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(&shown, line_no, format!("bad velocity {:?}", fields[3])))?;
        if member >= side.h || cell >= nc || t >= nt {
            return Err(parse_err(
                &shown,
                line_no,
                format!("member {member}, cell {cell}, time {t} outside H={}, cells={nc}, steps={nt}", side.h),
            ));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(parse_err(&shown, line_no, format!("velocity {v} must be finite and non-negative")));
        }
        let k = member * per_member + cell * nt + t;
        if seen[k] {
            return Err(parse_err(&shown, line_no, format!("duplicate row for member {member}, cell {cell}, time {t}")));
        }
        seen[k] = true;
        vel[k] = v;
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(&shown, 0, "no members"));
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let member = k / per_member;
        let cell = (k % per_member) / nt;
        let t = k % nt;
        return Err(parse_err(
            &shown,
            0,
            format!("missing row for member {member}, cell {cell}, time {t}"),
        ));
    }
    let members = vel
        .chunks(per_member)
        .map(|c| WindField::new(grid, times, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wind_field::axisymmetric_field;
    use proptest::prelude::*;

    fn spec(h: usize, sigma: f64, seed: u64) -> EnsemblePerturbationSpec {
        EnsemblePerturbationSpec {
            base_track: Track { x0: (0.0, 0.0), vtr: (0.0, 3.0), duration: 6.0 },
            base_params: HollandParams::new(35.0, 20.0, 1.0).unwrap(),
            sigma_track: 10.0 * sigma,
            sigma_heading: 5.0 * sigma,
            sigma_vm: 5.0 * sigma,
            sigma_rm: 3.0 * sigma,
            seed,
            h,
            asymmetric: false,
            hemisphere: Hemisphere::North,
        }
    }

    fn small() -> (Grid, TimeAxis) {
        (Grid::new((-40.0, -40.0), 8, 8, 10.0).unwrap(), TimeAxis::hourly(6))
    }

    #[test]
    fn zero_sigma_members_equal_deterministic_field() {
        let (g, t) = small();
        let s = spec(5, 0.0, 7);
        let e = generate_synthetic_ensemble(&s, &g, &t).unwrap();
        let det = axisymmetric_field(&s.base_track, &s.base_params, &g, &t).unwrap();
        assert_eq!(e.h(), 5);
        for m in e.members() {
            assert_eq!(m, &det);
        }
        assert_eq!(mean_velocity(&e), det.velocities);
    }

    #[test]
    fn seeded_reproducibility() {
        let (g, t) = small();
        let a = generate_synthetic_ensemble(&spec(4, 1.0, 11), &g, &t).unwrap();
        let b = generate_synthetic_ensemble(&spec(4, 1.0, 11), &g, &t).unwrap();
        let c = generate_synthetic_ensemble(&spec(4, 1.0, 12), &g, &t).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a.members()[0], a.members()[1]);
    }

    #[test]
    fn sample_std_of_vm() {
        let s = EnsemblePerturbationSpec {
            base_params: HollandParams::new(60.0, 30.0, 1.0).unwrap(),
            ..spec(1000, 1.0, 2024)
        };
        let vms: Vec<f64> = (0..s.h).map(|i| s.member(i).1.vm).collect();
        let mean = vms.iter().sum::<f64>() / 1000.0;
        let sd = (vms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!((sd - 5.0).abs() <= 0.35, "sd {sd}");
    }

    #[test]
    fn truncation() {
        let s = EnsemblePerturbationSpec {
            base_params: HollandParams::new(1.5, 1.5, 1.0).unwrap(),
            sigma_vm: 50.0,
            sigma_rm: 50.0,
            ..spec(200, 1.0, 3)
        };
        for i in 0..200 {
            let (_, p) = s.member(i);
            assert!(p.vm >= 1.0 && p.rm >= 1.0);
        }
    }

    #[test]
    fn mean_examples() {
        let g = Grid::new((0.0, 0.0), 1, 1, 1.0).unwrap();
        let t = TimeAxis::hourly(1);
        let a = WindField::new(g, t, vec![10.0]).unwrap();
        let b = WindField::new(g, t, vec![30.0]).unwrap();
        assert_eq!(mean_velocity(&Ensemble::new(vec![a.clone(), b.clone()]).unwrap()), vec![20.0]);
        assert_eq!(mean_velocity(&Ensemble::new(vec![b, a]).unwrap()), vec![20.0]);
        assert!(Ensemble::new(vec![]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let (g, t) = small();
        let e = generate_synthetic_ensemble(&spec(3, 1.0, 5), &g, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ens.csv");
        save_ensemble(&e, &p, Some("feed")).unwrap();
        let back = load_ensemble(&p).unwrap();
        // CSV keeps 9 significant digits
        for (m, n) in e.members().iter().zip(back.members()) {
            for (a, b) in m.velocities.iter().zip(&n.velocities) {
                assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300));
            }
        }
        // a second round trip is exact
        let q = dir.path().join("again.csv");
        save_ensemble(&back, &q, None).unwrap();
        assert_eq!(load_ensemble(&q).unwrap(), back);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let side = r#"{"H":1,"nx":1,"ny":1,"cell_size_km":1.0,"n_steps":2,"dt_h":1.0}"#;
        std::fs::write(sidecar_path(&p), side).unwrap();

        std::fs::write(&p, "").unwrap();
        assert!(load_ensemble(&p).unwrap_err().to_string().contains("no members"));

        std::fs::write(&p, "member,cell_id,time_index,velocity_mps\n0,0,0,1.5\n").unwrap();
        let err = load_ensemble(&p).unwrap_err().to_string();
        assert!(err.contains("missing row for member 0, cell 0, time 1"), "{err}");

        std::fs::write(&p, "member,cell_id,time_index,velocity_mps\n0,0,0,1.5\n0,0,x,2\n").unwrap();
        let err = load_ensemble(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");

        std::fs::write(&p, "member,cell_id,time_index,velocity_mps\n0,0,0,1.5\n0,0,0,2\n").unwrap();
        assert!(load_ensemble(&p).unwrap_err().to_string().contains("duplicate"));

        std::fs::write(&p, "member,cell_id,time_index,velocity_mps\n0,0,0,1.5\n0,0,1,2.5\n").unwrap();
        let e = load_ensemble(&p).unwrap();
        assert_eq!(e.members()[0].velocities, vec![1.5, 2.5]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mean_lies_between_members(seed in any::<u64>(), h in 1usize..8) {
            let (g, t) = small();
            let e = generate_synthetic_ensemble(&spec(h, 1.0, seed), &g, &t).unwrap();
            let mean = mean_velocity(&e);
            for (k, m) in mean.iter().enumerate() {
                let lo = e.members().iter().map(|f| f.velocities[k]).fold(f64::INFINITY, f64::min);
                let hi = e.members().iter().map(|f| f.velocities[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*m >= lo * (1.0 - 1e-12) && *m <= hi * (1.0 + 1e-12));
            }
        }
    }
}
