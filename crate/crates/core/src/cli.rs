//! The `stormrisk` command line.
//!
//! Every subcommand reads a [`RunConfig`], applies `--set` overrides and
//! writes CSV or JSON into the output directory. Exit codes: 0 on success,
//! 1 when a run fails, 2 for invalid input.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::aggregate::{damage_loss_sweep, fit_damage_model, fit_loss_model, loglog_slope, write_damage_loss_csv};
use crate::config::{is_input_error, RunConfig};
use crate::critical_zone::{
    critical_radius, critical_zone_numeric, critzone_sweep, fit_crit_area, fit_crit_radius, obround_area, table_entry,
    write_critzone_sweep_csv, write_tables_csv, zone_failure_stats,
};
use crate::ensemble::{generate_synthetic_ensemble, load_ensemble, save_ensemble, Ensemble};
use crate::error::{invalid, Result};
use crate::export::{fmt_num, write_provenance};
use crate::geo_grid::CountySet;
use crate::nhpp::{failure_rate_field, fd_a, fd_b, fr1_field, fr2, fr2_field, saturated_distribution};
use crate::outage_glm::{load_observations, outage_pipeline, synthetic_observations, write_observations_csv, OutageFit, Predictor};

#[derive(Debug, Parser)]
#[command(name = "stormrisk", version, about = "Storm wind fields to failure, outage and loss estimates")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set times.dt_h=0.5`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "STORMRISK_THREADS", global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default configuration as JSON.
    DefaultConfig,
    /// Wind field of the configured storm.
    Windfield,
    /// Generate and save a perturbed-storm ensemble.
    Ensemble,
    /// FR-1 or FR-2 failure rates of the ensemble.
    FailureRates {
        #[arg(long, value_enum, default_value_t = RateKind::Fr2)]
        kind: RateKind,
    },
    /// Failure-count distributions at selected cells.
    FailDist {
        #[arg(long, value_delimiter = ',', required = true)]
        cells: Vec<usize>,
        #[arg(long, value_enum, default_value_t = DistKind::Fdb)]
        kind: DistKind,
        /// Largest count tabulated; the remaining mass is reported as a tail.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Critical zone and failure statistics of the configured storm.
    Critzone,
    /// Sweep over (Vm, Rm) and fit a parametric model.
    SweepFit {
        #[arg(long, value_enum)]
        model: SweepModel,
    },
    /// Synthetic county outage observations forward-simulated from the ensemble.
    OutageSynth,
    /// Binomial regression of county outages on a storm predictor.
    OutageFit {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum, default_value_t = Predictor::FailureRate)]
        predictor: Predictor,
        /// Only fit observations at this time; all times otherwise.
        #[arg(long)]
        time_h: Option<f64>,
    },
    /// Zone areas and failure statistics for the configured (Vm, Rm) table.
    Tables123,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RateKind {
    Fr1,
    Fr2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistKind {
    Fda,
    Fdb,
    /// Saturated at the cell's asset count, with rate `ℓg · FR-2`.
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepModel {
    Critzone,
    Damage,
    Loss,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.global.threads);
            return 1;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_input_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let base = match &g.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            crate::Error::Io(io) => invalid("--config", format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&g.overrides)?;
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.cfg.output_dir)?;
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, command: &str, body: &T) -> Result<()> {
        let doc = json!({
            "command": command,
            "config_sha256": self.hash,
            "result": body,
        });
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &round_json(doc))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn ensemble(&self) -> Result<Ensemble> {
        match &self.cfg.ensemble_path {
            Some(p) => {
                require_file(p, "ensemble_path")?;
                load_ensemble(p)
            }
            None => generate_synthetic_ensemble(&self.cfg.ensemble_spec(), &self.cfg.grid(), &self.cfg.times()),
        }
    }

    fn counties(&self) -> Result<CountySet> {
        let p = self
            .cfg
            .counties_path
            .as_ref()
            .ok_or_else(|| invalid("counties_path", "this command needs a county fixture"))?;
        require_file(p, "counties_path")?;
        CountySet::load_fixture(p, &self.cfg.grid())
    }
}

fn require_file(p: &Path, field: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(invalid(field, format!("{} does not exist", p.display())))
    }
}

/// Rounds every JSON number to the CSV precision so that JSON outputs are
/// as reproducible as the CSVs.
fn round_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            fmt_num(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::DefaultConfig = cli.command {
        let cfg = RunConfig::default();
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let cfg = load_config(&cli.global)?;
    let ctx = Ctx { hash: cfg.hash(), cfg };
    match &cli.command {
        Command::DefaultConfig => unreachable!(),
        Command::Windfield => cmd_windfield(&ctx),
        Command::Ensemble => cmd_ensemble(&ctx),
        Command::FailureRates { kind } => cmd_failure_rates(&ctx, *kind),
        Command::FailDist { cells, kind, n_max } => cmd_fail_dist(&ctx, cells, *kind, *n_max),
        Command::Critzone => cmd_critzone(&ctx),
        Command::SweepFit { model } => cmd_sweep_fit(&ctx, *model),
        Command::OutageSynth => cmd_outage_synth(&ctx),
        Command::OutageFit { obs, predictor, time_h } => cmd_outage_fit(&ctx, obs, *predictor, *time_h),
        Command::Tables123 => cmd_tables123(&ctx),
    }
}

fn cmd_windfield(ctx: &Ctx) -> Result<()> {
    let field = ctx.cfg.storm()?.materialize();
    let mut w = ctx.create("windfield.csv")?;
    field.write_csv(&mut w, Some(&ctx.hash))?;
    w.flush()?;
    Ok(())
}

fn cmd_ensemble(ctx: &Ctx) -> Result<()> {
    let e = generate_synthetic_ensemble(&ctx.cfg.ensemble_spec(), &ctx.cfg.grid(), &ctx.cfg.times())?;
    std::fs::create_dir_all(&ctx.cfg.output_dir)?;
    save_ensemble(&e, ctx.path("ensemble.csv"), Some(&ctx.hash))
}

fn cmd_failure_rates(ctx: &Ctx, kind: RateKind) -> Result<()> {
    let e = ctx.ensemble()?;
    let p = ctx.cfg.nhpp();
    let (fr, name) = match kind {
        RateKind::Fr1 => (fr1_field(&p, &e), "failure_rates_fr1.csv"),
        RateKind::Fr2 => (fr2_field(&p, &e), "failure_rates_fr2.csv"),
    };
    let mut w = ctx.create(name)?;
    fr.write_csv(&mut w, Some(&ctx.hash))?;
    w.flush()?;
    Ok(())
}

fn cmd_fail_dist(ctx: &Ctx, cells: &[usize], kind: DistKind, n_max: Option<usize>) -> Result<()> {
    let e = ctx.ensemble()?;
    let p = ctx.cfg.nhpp();
    let inventory = ctx.cfg.inventory()?;
    let counts = inventory.counts();
    for &cell in cells {
        e.grid().check_cell(cell)?;
        let (d, tag) = match kind {
            DistKind::Fda => (fd_a(&p, &e, cell, n_max)?, "fda"),
            DistKind::Fdb => (fd_b(&p, &e, cell, n_max)?, "fdb"),
            DistKind::Saturated => {
                let rate = fr2(&p, &e, cell)?;
                (saturated_distribution(inventory.lengths[cell] * rate, counts[cell])?, "saturated")
            }
        };
        let mut w = ctx.create(&format!("fail_dist_{tag}_cell{cell}.csv"))?;
        d.write_csv(&mut w, Some(&ctx.hash))?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_critzone(ctx: &Ctx) -> Result<()> {
    let storm = ctx.cfg.storm()?;
    let p = ctx.cfg.holland();
    let nhpp = ctx.cfg.nhpp();
    let vthres = ctx.cfg.tables.vthres_mps;
    let fr = failure_rate_field(&nhpp, &storm);
    let zone = critical_zone_numeric(&storm, vthres, &p, &ctx.cfg.track())?;
    let mut w = ctx.create("critzone_cells.csv")?;
    write_provenance(&mut w, Some(&ctx.hash))?;
    writeln!(w, "cell_id,failure_rate_per_km")?;
    for &c in &zone.cells {
        writeln!(w, "{c},{}", fmt_num(fr.values[c]))?;
    }
    w.flush()?;

    let rcrit = critical_radius(&p, vthres)?;
    let mut w = ctx.create("critzone_stats.csv")?;
    write_provenance(&mut w, Some(&ctx.hash))?;
    writeln!(w, "Vm_mps,Rm_km,Vthres_mps,Rcrit_km,Acrit_numeric_km2,Acrit_obround_km2,n_cells,maxFR,meanFR")?;
    let (max, mean) = match zone_failure_stats(&fr, &zone) {
        Ok(s) => (fmt_num(s.max), fmt_num(s.mean)),
        Err(_) => (String::new(), String::new()),
    };
    let (rc, obround) = match rcrit {
        Some(r) => (fmt_num(r), fmt_num(obround_area(r, ctx.cfg.track.duration_h, ctx.cfg.track().vtr))),
        None => (String::new(), String::new()),
    };
    writeln!(
        w,
        "{},{},{},{rc},{},{obround},{},{max},{mean}",
        fmt_num(p.vm),
        fmt_num(p.rm),
        fmt_num(vthres),
        fmt_num(zone.area),
        zone.cells.len()
    )?;
    w.flush()?;
    Ok(())
}

fn cmd_sweep_fit(ctx: &Ctx, model: SweepModel) -> Result<()> {
    let spec = ctx.cfg.sweep;
    let nhpp = ctx.cfg.nhpp();
    match model {
        SweepModel::Critzone => {
            let vthres = ctx.cfg.tables.vthres_mps;
            let rows = critzone_sweep(&spec, &nhpp, vthres)?;
            let mut w = ctx.create("sweep_critzone.csv")?;
            write_critzone_sweep_csv(&rows, &mut w, Some(&ctx.hash))?;
            w.flush()?;
            let radius = fit_crit_radius(&spec.pairs(), spec.b, vthres)?;
            let area = fit_crit_area(&rows, &radius, spec.duration_h, spec.vtr_mps, vthres)?;
            ctx.write_json("fit_critzone.json", "sweep-fit critzone", &json!({ "radius": radius, "area": area }))
        }
        SweepModel::Damage | SweepModel::Loss => {
            let rows = damage_loss_sweep(&spec, &nhpp)?;
            let mut w = ctx.create("sweep_damage_loss.csv")?;
            write_damage_loss_csv(&rows, &mut w, Some(&ctx.hash))?;
            w.flush()?;
            let nominal = nhpp.lambda_norm * spec.duration_h;
            if model == SweepModel::Damage {
                let fit = fit_damage_model(&rows, nhpp.vcrit)?;
                let pts: Vec<_> = rows.iter().map(|r| (r.vm, r.rm, r.damage_norm)).collect();
                let slopes: Vec<_> = spec
                    .rm_values()
                    .into_iter()
                    .filter_map(|rm| loglog_slope(&pts, rm, (30.0, 80.0), nhpp.vcrit, nominal).ok())
                    .collect();
                ctx.write_json("fit_damage.json", "sweep-fit damage", &json!({ "model": fit, "exponent_2p1": 2.0 * fit.p1, "loglog_slopes": slopes }))
            } else {
                let fit = fit_loss_model(&rows, nhpp.vcrit)?;
                let pts: Vec<_> = rows.iter().map(|r| (r.vm, r.rm, r.loss_norm)).collect();
                let slopes: Vec<_> = spec
                    .rm_values()
                    .into_iter()
                    .filter_map(|rm| loglog_slope(&pts, rm, (30.0, 80.0), nhpp.vcrit, 0.5 * nominal * nominal).ok())
                    .collect();
                ctx.write_json("fit_loss.json", "sweep-fit loss", &json!({ "model": fit, "exponent_3p": 3.0 * fit.p, "loglog_slopes": slopes }))
            }
        }
    }
}

fn cmd_outage_synth(ctx: &Ctx) -> Result<()> {
    let e = ctx.ensemble()?;
    let counties = ctx.counties()?;
    let obs = synthetic_observations(&e, &counties, &ctx.cfg.nhpp(), ctx.cfg.outage.time_h, ctx.cfg.outage.model, ctx.cfg.seed)?;
    let mut w = ctx.create("observations.csv")?;
    write_observations_csv(&obs, &mut w, Some(&ctx.hash))?;
    w.flush()?;
    Ok(())
}

fn cmd_outage_fit(ctx: &Ctx, obs_path: &Path, predictor: Predictor, time_h: Option<f64>) -> Result<()> {
    require_file(obs_path, "--obs")?;
    let obs = load_observations(obs_path)?;
    let e = ctx.ensemble()?;
    let counties = ctx.counties()?;
    let mut times: Vec<f64> = match time_h {
        Some(t) => vec![t],
        None => obs.iter().map(|o| o.time_h).collect(),
    };
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.is_empty() {
        return Err(invalid("--obs", "no observations"));
    }
    let nhpp = ctx.cfg.nhpp();
    let fits: Result<Vec<OutageFit>> = times
        .par_iter()
        .map(|&t| outage_pipeline(&e, &counties, &nhpp, &obs, t, predictor))
        .collect();
    let name = match predictor {
        Predictor::FailureRate => "outage_fit_failure_rate.json",
        Predictor::CumulativeVelocity => "outage_fit_cumulative_velocity.json",
    };
    ctx.write_json(name, "outage-fit", &fits?)
}

fn cmd_tables123(ctx: &Ctx) -> Result<()> {
    let scn = ctx.cfg.scenario();
    let mut cases = Vec::new();
    for &vm in &ctx.cfg.tables.vm_mps {
        for &rm in &ctx.cfg.tables.rm_km {
            for asym in [false, true] {
                cases.push((vm, rm, asym));
            }
        }
    }
    let rows: Result<Vec<_>> = cases.iter().map(|&(vm, rm, asym)| table_entry(&scn, vm, rm, asym)).collect();
    let mut w = ctx.create("tables123.csv")?;
    write_tables_csv(&rows?, &mut w, Some(&ctx.hash))?;
    w.flush()?;
    Ok(())
}
