//! Command-line front end: configuration, orchestration and CSV output.
//!
//! A run is described by an [`ExperimentConfig`], read from an optional JSON
//! file (or from a previous `manifest.json`), then patched by dotted flags
//! such as `--model.d=4` or `--sim.replications 50`. Every experiment writes
//! its CSV files and a `manifest.json` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotics::{decay_time_asymptote, DecayCurve, OverloadDecay};
use crate::error::{Error, Result};
use crate::fluctuations::{clt_ensemble, default_gamma, empirical_fluctuation, SdeOptions};
use crate::fluid::{eval_fluid, fluid_limit, fluid_numeric};
use crate::model::{ModelParams, Regime};
use crate::sim::{
    empirical_occupancy, first_passage_fraction, run_ensemble, simulate_path, simulate_paths, EnsembleStats,
    SimConfig,
};
use crate::skorohod::GspOptions;

pub const THREADS_ENV: &str = "REPLICA_DECAY_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_EVENT_CAP: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Ensemble statistics and one sample trajectory.
    Simulate,
    /// Closed-form fluid limit.
    Fluid,
    /// Fluid limit from the generalized Skorohod problem.
    Skorohod,
    /// Decay law of the lost fraction.
    Decay,
    /// Fluctuations around the decay law against the limiting SDE.
    Fluct,
    /// Occupancy distribution of the top level against the geometric law.
    Occupancy,
    /// Simulation against the fluid limit.
    Compare,
    /// First time a fraction of the files is lost.
    FirstPassage,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Fluid => "fluid",
            Experiment::Skorohod => "skorohod",
            Experiment::Decay => "decay",
            Experiment::Fluct => "fluct",
            Experiment::Occupancy => "occupancy",
            Experiment::Compare => "compare",
            Experiment::FirstPassage => "first-passage",
        }
    }
}

/// One network size or several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Servers {
    One(u64),
    Many(Vec<u64>),
}

impl Servers {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Servers::One(n) => vec![*n],
            Servers::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_servers: Servers,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 4,
            lambda: 0.22,
            mu: 0.1,
            beta: 1.0,
            gamma: 0.0,
            n_servers: Servers::One(1000),
        }
    }
}

/// Knobs that only some experiments read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// Lost fraction targeted by `first-passage`.
    pub delta: f64,
    /// Grid step of the Skorohod solver.
    pub numeric_step: f64,
    pub gsp_tol: f64,
    pub gsp_max_iter: usize,
    pub sde_step: f64,
    pub sde_paths: u64,
    /// Scaled occupancy window; defaults to the last grid interval.
    pub window: Option<[f64; 2]>,
    /// Coordinate whose occupancy is measured; defaults to `d - 1`.
    pub level: Option<usize>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        let gsp = GspOptions::default();
        Self {
            delta: 0.5,
            numeric_step: 1e-3,
            gsp_tol: gsp.tol,
            gsp_max_iter: gsp.max_iter,
            sde_step: 1e-3,
            sde_paths: 10_000,
            window: None,
            level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub model: ModelConfig,
    pub sim: SimConfig,
    pub options: ExperimentOptions,
    pub out: PathBuf,
    /// Significant digits of floats in CSV files.
    pub precision: usize,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            model: ModelConfig::default(),
            sim: SimConfig {
                horizon: 30.0,
                grid_step: 0.1,
                replications: 20,
                ..SimConfig::default()
            },
            options: ExperimentOptions::default(),
            out: PathBuf::from("out"),
            precision: 17,
            threads: None,
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Reads a config file. A manifest written by a previous run is accepted
    /// as well; its embedded config is used.
    pub fn from_file(path: &Path) -> Result<Self> {
        let field = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| config_error(&field, e.to_string()))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| config_error(&field, e.to_string()))?;
        if let Some(inner) = value.get_mut("config").filter(|_| value_has_version(&text)) {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| config_error(&field, e.to_string()))
    }

    /// Applies `key=value` overrides with dotted keys. Values are read as
    /// JSON when possible and as plain strings otherwise.
    pub fn apply_overrides(self, overrides: &[(String, String)]) -> Result<Self> {
        let mut tree = serde_json::to_value(&self)?;
        let mut cfg = self;
        for (key, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            let mut node = &mut tree;
            for part in key.split('.') {
                node = node
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| config_error(key, "no such field"))?;
            }
            *node = value;
            cfg = serde_json::from_value(tree.clone()).map_err(|e| config_error(key, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn server_counts(&self) -> Result<Vec<u64>> {
        let ns = self.model.n_servers.values();
        if ns.is_empty() {
            return Err(config_error("model.n_servers", "needs at least one value"));
        }
        Ok(ns)
    }

    pub fn params(&self, n: u64) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(m.d, m.lambda, m.mu, m.beta, m.gamma, n).map_err(|e| config_error("model", e.to_string()))
    }

    /// Parameter, grid and regime checks done before anything runs.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        self.sim.validate()?;
        if !(1..=17).contains(&self.precision) {
            return Err(config_error("precision", format!("must lie in 1..=17, got {}", self.precision)));
        }
        if self.threads == Some(0) {
            return Err(config_error("threads", "must be at least 1"));
        }
        for n in self.server_counts()? {
            let params = self.params(n)?;
            let regime = params.regime();
            // fluid and decay surface the rejection through their own solvers.
            if let Regime::Rejected(reason) = regime {
                if !matches!(experiment, Experiment::Fluid | Experiment::Decay) {
                    return Err(config_error("model", format!("parameter regime rejected: {reason}")));
                }
            }
            let needs_stable = matches!(
                experiment,
                Experiment::Fluct | Experiment::Occupancy | Experiment::FirstPassage
            );
            if needs_stable && regime != Regime::Stable {
                return Err(config_error(
                    "model",
                    format!("{} needs rho > d*beta, regime is {regime}", experiment.name()),
                ));
            }
        }
        let q = self.sim.time_scale_exponent;
        match experiment {
            Experiment::Compare if q != 0 => Err(config_error("sim.q", "compare runs on the fluid scale, q must be 0")),
            Experiment::Fluct if q as usize != self.model.d - 1 => {
                Err(config_error("sim.q", format!("fluct needs q = d - 1 = {}", self.model.d - 1)))
            }
            _ => Ok(()),
        }
    }
}

fn value_has_version(text: &str) -> bool {
    serde_json::from_str::<Value>(text)
        .ok()
        .is_some_and(|v| v.get("version").is_some())
}

#[derive(Debug, Parser)]
#[command(name = "replica-decay", version, about = "Duplication of files on unreliable servers")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
    /// JSON config file or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to REPLICA_DECAY_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

type Override = (String, String);

/// Splits dotted `--a.b=v` / `--a.b v` flags from the rest of the arguments.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value.or_else(|| it.next()) {
            Some(v) => v,
            None => return Err(config_error(&key, "missing value")),
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Outcome of a finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Value,
    /// Replications dropped because they ran out of events.
    pub cap_exceeded: u64,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::EventCapExceeded { .. } => EXIT_EVENT_CAP,
        Error::InvalidParams(_)
        | Error::InvalidState(_)
        | Error::RegimeRejected(_)
        | Error::Domain(_)
        | Error::EmptyWindow { .. }
        | Error::UnsupportedDimension(_)
        | Error::GridMismatch(_)
        | Error::Config { .. }
        | Error::Json(_) => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_from_env() -> i32 {
    run_cli(std::env::args().collect())
}

pub fn run_cli(args: Vec<String>) -> i32 {
    let (rest, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match configure(&cli, &overrides).and_then(|cfg| run_with_threads(cli.experiment, cfg)) {
        Ok(report) if report.cap_exceeded > 0 => {
            eprintln!(
                "error: {} replication(s) hit the event cap (sim.event_cap); outputs exclude them",
                report.cap_exceeded
            );
            EXIT_EVENT_CAP
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure(cli: &Cli, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let base = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.apply_overrides(overrides)?;
    cfg.experiment = Some(cli.experiment);
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

fn thread_count(cfg: &ExperimentConfig) -> Result<Option<usize>> {
    if cfg.threads.is_some() {
        return Ok(cfg.threads);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(config_error(THREADS_ENV, format!("expected a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn run_with_threads(experiment: Experiment, cfg: ExperimentConfig) -> Result<RunReport> {
    cfg.validate(experiment)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(&cfg)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| config_error("threads", e.to_string()))?;
    pool.install(|| run(experiment, &cfg))
}

/// Runs one experiment and writes its outputs and manifest.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate(experiment)?;
    let started = Instant::now();
    fs::create_dir_all(&cfg.out)?;
    let mut out = Output::new(&cfg.out, cfg.precision);
    let summary = match experiment {
        Experiment::Simulate => simulate(cfg, &mut out)?,
        Experiment::Fluid => fluid(cfg, &mut out)?,
        Experiment::Skorohod => skorohod(cfg, &mut out)?,
        Experiment::Decay => decay(cfg, &mut out)?,
        Experiment::Fluct => fluct(cfg, &mut out)?,
        Experiment::Occupancy => occupancy(cfg, &mut out)?,
        Experiment::Compare => compare(cfg, &mut out)?,
        Experiment::FirstPassage => first_passage(cfg, &mut out)?,
    };
    let mut recorded = cfg.clone();
    recorded.experiment = Some(experiment);
    let manifest = json!({
        "experiment": experiment.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.sim.seed,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "files": out.files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "summary": summary,
        "cap_exceeded": out.cap_exceeded,
        "config": recorded,
    });
    let manifest_path = cfg.out.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    let mut files = out.files;
    files.push(manifest_path);
    Ok(RunReport {
        files,
        summary,
        cap_exceeded: out.cap_exceeded,
    })
}

struct Output {
    dir: PathBuf,
    precision: usize,
    files: Vec<PathBuf>,
    cap_exceeded: u64,
}

impl Output {
    fn new(dir: &Path, precision: usize) -> Self {
        Self {
            dir: dir.to_path_buf(),
            precision,
            files: Vec::new(),
            cap_exceeded: 0,
        }
    }

    fn float(&self, v: f64) -> String {
        format!("{:.*e}", self.precision - 1, v)
    }

    /// Writes a CSV whose first column is an integer or float key, per `Key`.
    fn write(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = (Key, Vec<f64>)>) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for (key, values) in rows {
            match key {
                Key::Int(i) => write!(text, "{i}").unwrap(),
                Key::Float(t) => text.push_str(&self.float(t)),
            }
            for v in values {
                text.push(',');
                text.push_str(&self.float(v));
            }
            text.push('\n');
        }
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }
}

enum Key {
    Int(u64),
    Float(f64),
}

fn state_header(d: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..=d).map(|k| format!("x_{k}")))
        .collect()
}

fn stats_header(d: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..=d).flat_map(|k| [format!("mean_{k}"), format!("var_{k}")]))
        .collect()
}

fn write_stats(out: &mut Output, name: &str, stats: &EnsembleStats) -> Result<()> {
    let d = stats.d();
    let rows = stats.grid.iter().enumerate().map(|(i, &t)| {
        let values = (0..=d).flat_map(|k| [stats.mean[k][i], stats.variance[k][i]]).collect();
        (Key::Float(t), values)
    });
    out.write(name, &stats_header(d), rows)
}

/// Runs an ensemble and records dropped replications instead of failing.
/// `None` when no replication reached the horizon.
fn ensemble(params: &ModelParams, cfg: &SimConfig, out: &mut Output) -> Result<Option<EnsembleStats>> {
    let stats = run_ensemble(params, cfg)?;
    out.cap_exceeded += stats.cap_exceeded;
    Ok((stats.replications > 0).then_some(stats))
}

fn simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let mut summary = Vec::new();
    for n in cfg.server_counts()? {
        let params = cfg.params(n)?;
        let Some(stats) = ensemble(&params, &cfg.sim, out)? else {
            continue;
        };
        write_stats(out, &format!("stats_N{n}.csv"), &stats)?;
        match simulate_path(&params, &cfg.sim, 0) {
            Ok(traj) => {
                let nf = n as f64;
                let rows = traj.grid.iter().zip(&traj.states).map(|(&t, s)| {
                    (Key::Float(t), s.counts().iter().map(|&c| c as f64 / nf).collect())
                });
                out.write(&format!("trajectory_N{n}.csv"), &state_header(params.d()), rows)?;
            }
            // Already counted by the ensemble.
            Err(Error::EventCapExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
        summary.push(json!({
            "n_servers": n,
            "files": params.f_n(),
            "regime": params.regime().to_string(),
            "replications": stats.replications,
        }));
    }
    Ok(Value::Array(summary))
}

fn first_params(cfg: &ExperimentConfig) -> Result<ModelParams> {
    cfg.params(cfg.server_counts()?[0])
}

fn fluid(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let params = first_params(cfg)?;
    let sol = fluid_limit(&params)?;
    let rows = cfg.sim.grid().into_iter().map(|t| (Key::Float(t), eval_fluid(&sol, t)));
    out.write("fluid.csv", &state_header(params.d()), rows)?;
    let thresholds = sol.thresholds();
    let rows = thresholds.iter().map(|&(l, t)| (Key::Int(l as u64), vec![t]));
    out.write("thresholds.csv", &["level".into(), "t".into()], rows)?;
    Ok(json!({
        "regime": sol.regime().to_string(),
        "thresholds": thresholds.iter().map(|&(l, t)| json!({"level": l, "t": t})).collect::<Vec<_>>(),
    }))
}

/// Maps scaled grid times onto indices of a finer grid with step `h`.
fn aligned_indices(grid: &[f64], h: f64, field: &str) -> Result<Vec<usize>> {
    grid.iter()
        .map(|&t| {
            let i = (t / h).round();
            if (i * h - t).abs() > 1e-9 * (1.0 + t) {
                Err(config_error(field, format!("sim.grid_step must be a multiple of {h}")))
            } else {
                Ok(i as usize)
            }
        })
        .collect()
}

fn skorohod(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let params = first_params(cfg)?;
    let opts = GspOptions {
        tol: cfg.options.gsp_tol,
        max_iter: cfg.options.gsp_max_iter,
        ..GspOptions::default()
    };
    let h = cfg.options.numeric_step;
    let num = fluid_numeric(&params, h, cfg.sim.horizon, &opts)?;
    let grid = cfg.sim.grid();
    let idx = aligned_indices(&grid, h, "options.numeric_step")?;
    let closed = fluid_limit(&params)?;
    let mut sup: f64 = 0.0;
    for i in 0..num.len() {
        let exact = eval_fluid(&closed, num.time(i));
        for (a, b) in num.x_at(i).iter().zip(&exact) {
            sup = sup.max((a - b).abs());
        }
    }
    let rows = grid.iter().zip(&idx).map(|(&t, &i)| (Key::Float(t), num.x_at(i)));
    out.write("skorohod.csv", &state_header(params.d()), rows)?;
    let dm1 = num.r.dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=dm1).map(|k| format!("r_{k}")))
        .collect();
    let rows = grid
        .iter()
        .zip(&idx)
        .map(|(&t, &i)| (Key::Float(t), (0..dm1).map(|k| num.r.value(k, i)).collect()));
    out.write("regulator.csv", &header, rows)?;
    Ok(json!({
        "picard_iterations": num.gsp.max_iterations(),
        "windows": num.gsp.windows.len(),
        "sup_error_vs_closed_form": sup,
    }))
}

fn decay(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let params = first_params(cfg)?;
    let grid = cfg.sim.grid();
    if let Regime::Overloaded { .. } = params.regime() {
        let od = OverloadDecay::new(&params)?;
        let p = od.p();
        let header = vec![
            "t".to_string(),
            "phi_0".into(),
            format!("phi_{p}"),
            format!("phi_{}", p + 1),
        ];
        let rows = grid.iter().map(|&t| {
            let s = od.phi(t);
            (Key::Float(t), vec![s.lost, s.at_p, s.above_p])
        });
        out.write("overload_decay.csv", &header, rows)?;
        return Ok(json!({ "p": p, "decay_constant": od.decay_constant(), "lost_limit": od.lost_limit() }));
    }
    let curve = DecayCurve::new(&params)?;
    let rows = grid
        .iter()
        .map(|&t| (Key::Float(t), vec![curve.phi_of_t(t), curve.occupancy_parameter(t)]));
    out.write("decay.csv", &["t".into(), "phi".into(), "r".into()], rows)?;
    let delta = cfg.options.delta;
    Ok(json!({
        "decay_constant": curve.decay_constant(),
        "delta": delta,
        "decay_time_asymptote": decay_time_asymptote(&params, delta)?,
    }))
}

fn fluct(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let mut summary = Vec::new();
    for n in cfg.server_counts()? {
        let params = cfg.params(n)?;
        let curve = DecayCurve::new(&params)?;
        let opts = SdeOptions::new(cfg.options.sde_step, cfg.sim.horizon, default_gamma(&params))?;
        let grid = cfg.sim.grid();
        let idx = aligned_indices(&grid, cfg.options.sde_step, "options.sde_step")?;
        let sde = clt_ensemble(&curve, &opts, cfg.options.sde_paths, cfg.sim.seed)?;
        let trajectories = simulate_paths(&params, &cfg.sim).into_iter().collect::<Result<Vec<_>>>()?;
        let emp = empirical_fluctuation(&trajectories, &curve)?.moments();
        let rows = grid.iter().zip(&idx).enumerate().map(|(j, (&t, &i))| {
            (Key::Float(t), vec![emp.mean[j], sde.variance[i], emp.variance[j]])
        });
        let header = ["t", "mean_W", "var_W_sde", "var_W_emp"].map(String::from);
        out.write(&format!("fluct_N{n}.csv"), &header, rows)?;
        summary.push(json!({ "n_servers": n, "gamma": opts.gamma }));
    }
    Ok(Value::Array(summary))
}

fn occupancy(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let [t1, t2] = cfg
        .options
        .window
        .unwrap_or([(cfg.sim.horizon - cfg.sim.grid_step).max(0.0), cfg.sim.horizon]);
    let level = cfg.options.level.unwrap_or(cfg.model.d - 1);
    let mut summary = Vec::new();
    for n in cfg.server_counts()? {
        let params = cfg.params(n)?;
        let curve = DecayCurve::new(&params)?;
        let hist = empirical_occupancy(&params, &cfg.sim, level, (t1, t2))?;
        let r = curve.occupancy_parameter(0.5 * (t1 + t2));
        let rows = hist
            .probabilities
            .iter()
            .enumerate()
            .map(|(j, &p)| (Key::Int(j as u64), vec![p, (1.0 - r) * r.powi(j as i32)]));
        out.write(
            &format!("occupancy_N{n}.csv"),
            &["value".into(), "empirical".into(), "geometric".into()],
            rows,
        )?;
        summary.push(json!({
            "n_servers": n,
            "level": level,
            "window": [t1, t2],
            "r": r,
            "tv_distance": hist.tv_distance_geometric(r),
        }));
    }
    Ok(Value::Array(summary))
}

fn compare(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let mut summary = Vec::new();
    for n in cfg.server_counts()? {
        let params = cfg.params(n)?;
        let sol = fluid_limit(&params)?;
        let Some(stats) = ensemble(&params, &cfg.sim, out)? else {
            continue;
        };
        write_stats(out, &format!("stats_N{n}.csv"), &stats)?;
        let d = params.d();
        let mut sup = vec![0.0f64; d + 1];
        for (i, &t) in stats.grid.iter().enumerate() {
            for (k, x) in eval_fluid(&sol, t).into_iter().enumerate() {
                sup[k] = sup[k].max((stats.mean[k][i] - x).abs());
            }
        }
        let rows = sup.iter().enumerate().map(|(k, &e)| (Key::Int(k as u64), vec![e]));
        out.write(&format!("compare_N{n}.csv"), &["k".into(), "sup_error".into()], rows)?;
        summary.push(json!({
            "n_servers": n,
            "sup_error": sup.iter().copied().fold(0.0, f64::max),
        }));
    }
    Ok(Value::Array(summary))
}

fn first_passage(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let delta = cfg.options.delta;
    let mut summary = Vec::new();
    for n in cfg.server_counts()? {
        let params = cfg.params(n)?;
        let times = first_passage_fraction(&params, delta, &cfg.sim)?;
        let scale = (n as f64).powi(params.d() as i32 - 1);
        let rows = times
            .iter()
            .enumerate()
            .map(|(r, &t)| (Key::Int(r as u64), vec![t, t / scale]));
        out.write(
            &format!("first_passage_N{n}.csv"),
            &["replication".into(), "T".into(), "T_over_scale".into()],
            rows,
        )?;
        let mean = times.iter().sum::<f64>() / times.len() as f64 / scale;
        summary.push(json!({
            "n_servers": n,
            "mean_T_over_scale": mean,
            "asymptote": decay_time_asymptote(&params, delta)?,
        }));
    }
    Ok(Value::Array(summary))
}
