//! Run configuration: one JSON document, dotted-path overrides and a content
//! hash that every output carries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregate::RepairParams;
use crate::critical_zone::Scenario;
use crate::ensemble::EnsemblePerturbationSpec;
use crate::error::{invalid, Error, Result};
use crate::export::sha256_hex;
use crate::geo_grid::{Grid, TimeAxis};
use crate::nhpp::{AssetInventory, NhppParams, DEFAULT_UNIT_LENGTH_KM, RURAL_DENSITY};
use crate::outage_glm::OutageModel;
use crate::sweep::SweepSpec;
use crate::wind_field::{Hemisphere, HollandParams, StormField, Track};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub origin_km: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub cell_size_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    pub t0_h: f64,
    pub n_steps: usize,
    pub dt_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub x0_km: [f64; 2],
    /// East and north components, m/s.
    pub vtr_mps: [f64; 2],
    pub duration_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HollandConfig {
    pub vm_mps: f64,
    pub rm_km: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NhppConfig {
    pub vcrit_mps: f64,
    pub alpha: f64,
    pub lambda_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig {
    pub asymmetric: bool,
    pub hemisphere: Hemisphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub h: usize,
    pub sigma_track_km: f64,
    pub sigma_heading_deg: f64,
    pub sigma_vm_mps: f64,
    pub sigma_rm_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryConfig {
    pub asset_density_km_per_km2: f64,
    pub unit_length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesConfig {
    pub vm_mps: Vec<f64>,
    pub rm_km: Vec<f64>,
    pub vthres_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageConfig {
    /// Observation time used by the synthetic generator, hours.
    pub time_h: f64,
    pub model: OutageModel,
}

/// Everything a command needs. Defaults describe a 121 h storm moving north
/// at 3 m/s over a 1 km grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub grid: GridConfig,
    pub times: TimesConfig,
    pub track: TrackConfig,
    pub holland: HollandConfig,
    pub nhpp: NhppConfig,
    pub wind: WindConfig,
    pub ensemble: EnsembleConfig,
    pub inventory: InventoryConfig,
    pub repair: RepairParams,
    pub sweep: SweepSpec,
    pub tables: TablesConfig,
    pub outage: OutageConfig,
    /// County fixture CSV, if any.
    pub counties_path: Option<PathBuf>,
    /// Saved ensemble CSV; when absent commands generate one from `ensemble`.
    pub ensemble_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = Scenario::default();
        let n = NhppParams::default();
        RunConfig {
            scenario: "straight-line-121h".into(),
            grid: GridConfig {
                origin_km: [s.grid.origin.0, s.grid.origin.1],
                nx: s.grid.nx,
                ny: s.grid.ny,
                cell_size_km: s.grid.cell_size,
            },
            times: TimesConfig {
                t0_h: s.times.t0,
                n_steps: s.times.n_steps,
                dt_h: s.times.dt,
            },
            track: TrackConfig {
                x0_km: [s.track.x0.0, s.track.x0.1],
                vtr_mps: [s.track.vtr.0, s.track.vtr.1],
                duration_h: s.track.duration,
            },
            holland: HollandConfig {
                vm_mps: 46.0,
                rm_km: 30.0,
                b: s.b,
            },
            nhpp: NhppConfig {
                vcrit_mps: n.vcrit,
                alpha: n.alpha,
                lambda_norm: n.lambda_norm,
            },
            wind: WindConfig {
                asymmetric: false,
                hemisphere: Hemisphere::North,
            },
            ensemble: EnsembleConfig {
                h: 20,
                sigma_track_km: 20.0,
                sigma_heading_deg: 5.0,
                sigma_vm_mps: 3.0,
                sigma_rm_km: 3.0,
            },
            inventory: InventoryConfig {
                asset_density_km_per_km2: RURAL_DENSITY,
                unit_length_km: DEFAULT_UNIT_LENGTH_KM,
            },
            repair: RepairParams::default(),
            sweep: SweepSpec::default(),
            tables: TablesConfig {
                vm_mps: vec![25.0, 37.0, 46.0],
                rm_km: vec![20.0, 30.0, 40.0],
                vthres_mps: s.vthres,
            },
            outage: OutageConfig {
                time_h: s.times.t0 + (s.times.n_steps - 1) as f64 * s.times.dt,
                model: OutageModel::Saturated,
            },
            counties_path: None,
            ensemble_path: None,
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Missing keys are an error so that a config
    /// file fully determines a run.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `path=value` overrides, where `path` is dotted (`times.dt_h`)
    /// and `value` is JSON or, failing that, a bare string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = self.to_value();
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| invalid("--set", format!("{o:?} is not of the form path=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, path, parsed)?;
        }
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate("grid")?;
        self.times().validate("times")?;
        self.track().validate("track")?;
        self.holland().validate("holland")?;
        self.nhpp().validate("nhpp")?;
        self.ensemble_spec().validate("ensemble")?;
        if !(self.inventory.asset_density_km_per_km2 >= 0.0 && self.inventory.asset_density_km_per_km2.is_finite()) {
            return Err(invalid("inventory.asset_density_km_per_km2", "must be non-negative"));
        }
        if !(self.inventory.unit_length_km > 0.0 && self.inventory.unit_length_km.is_finite()) {
            return Err(invalid("inventory.unit_length_km", "must be positive"));
        }
        self.repair.validate("repair")?;
        self.sweep.validate("sweep")?;
        if !(self.tables.vthres_mps > 0.0 && self.tables.vthres_mps.is_finite()) {
            return Err(invalid("tables.vthres_mps", "must be positive"));
        }
        for (name, vs) in [("vm_mps", &self.tables.vm_mps), ("rm_km", &self.tables.rm_km)] {
            if vs.is_empty() || vs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(invalid(format!("tables.{name}"), "must be a non-empty list of positive values"));
            }
        }
        if self.times.n_steps as f64 * self.times.dt_h > self.track.duration_h * (1.0 + 1e-12) {
            return Err(invalid("times.n_steps", "the time axis outlasts track.duration_h"));
        }
        if !self.outage.time_h.is_finite() {
            return Err(invalid("outage.time_h", "must be finite"));
        }
        if let OutageModel::WindIndependent { p } = self.outage.model {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("outage.model.p", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory so
    /// that the same run written elsewhere carries the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn grid(&self) -> Grid {
        Grid {
            origin: (self.grid.origin_km[0], self.grid.origin_km[1]),
            nx: self.grid.nx,
            ny: self.grid.ny,
            cell_size: self.grid.cell_size_km,
        }
    }

    pub fn times(&self) -> TimeAxis {
        TimeAxis {
            t0: self.times.t0_h,
            n_steps: self.times.n_steps,
            dt: self.times.dt_h,
        }
    }

    pub fn track(&self) -> Track {
        Track {
            x0: (self.track.x0_km[0], self.track.x0_km[1]),
            vtr: (self.track.vtr_mps[0], self.track.vtr_mps[1]),
            duration: self.track.duration_h,
        }
    }

    pub fn holland(&self) -> HollandParams {
        HollandParams {
            vm: self.holland.vm_mps,
            rm: self.holland.rm_km,
            b: self.holland.b,
        }
    }

    pub fn nhpp(&self) -> NhppParams {
        NhppParams {
            vcrit: self.nhpp.vcrit_mps,
            alpha: self.nhpp.alpha,
            lambda_norm: self.nhpp.lambda_norm,
        }
    }

    pub fn storm(&self) -> Result<StormField> {
        if self.wind.asymmetric {
            StormField::asymmetric(self.track(), self.holland(), self.grid(), self.times(), self.wind.hemisphere)
        } else {
            StormField::axisymmetric(self.track(), self.holland(), self.grid(), self.times())
        }
    }

    pub fn ensemble_spec(&self) -> EnsemblePerturbationSpec {
        EnsemblePerturbationSpec {
            base_track: self.track(),
            base_params: self.holland(),
            sigma_track: self.ensemble.sigma_track_km,
            sigma_heading: self.ensemble.sigma_heading_deg,
            sigma_vm: self.ensemble.sigma_vm_mps,
            sigma_rm: self.ensemble.sigma_rm_km,
            seed: self.seed,
            h: self.ensemble.h,
            asymmetric: self.wind.asymmetric,
            hemisphere: self.wind.hemisphere,
        }
    }

    pub fn inventory(&self) -> Result<AssetInventory> {
        AssetInventory::uniform(&self.grid(), self.inventory.asset_density_km_per_km2, self.inventory.unit_length_km)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            grid: self.grid(),
            times: self.times(),
            track: self.track(),
            nhpp: self.nhpp(),
            b: self.holland.b,
            vthres: self.tables.vthres_mps,
            hemisphere: self.wind.hemisphere,
        }
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| invalid(parts[..i].join("."), "is not an object"))?;
        if !obj.contains_key(*key) {
            return Err(invalid(parts[..=i].join("."), "no such config field"));
        }
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*key).expect("checked above");
    }
    Err(invalid(path, "empty path"))
}

/// True for errors caused by the user's input rather than by the run.
pub fn is_input_error(e: &Error) -> bool {
    match e {
        Error::Invalid { .. } | Error::Parse { .. } | Error::Json(_) => true,
        Error::Io(io) => io.kind() == std::io::ErrorKind::NotFound,
        Error::Csv(c) => matches!(c.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound)
            || !matches!(c.kind(), csv::ErrorKind::Io(_)),
        Error::NoConvergence(_) => false,
    }
}
