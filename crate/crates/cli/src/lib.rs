//! Command-line front end for the timestep clustering pipeline.
//!
//! Every command writes its result to the given writer (stdout in the
//! binary) and returns the process exit code: 0 on success, 1 on a runtime
//! failure, 2 on a usage error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use stagecut::budget::{round_half_up, training_pflops, weighted_gflops, StageBudget, TrainingBudget};
use stagecut::cluster::{self, GridSpec, Objective, Partition};
use stagecut::dataset::{self, Dataset, DATA_DIR_ENV};
use stagecut::denoiser::OptimalDenoiser;
use stagecut::sampler::{self, OdeMethod, SampleInit, SampleOptions, TimeGrid};
use stagecut::schedule::{NoiseSchedule, VeSchedule, VpSchedule, DEFAULT_BETA_D, DEFAULT_BETA_MIN, DEFAULT_T_MIN};
use stagecut::similarity::{self, SimilarityConfig, StoreKind, StoreMeta, DEFAULT_ETA, DEFAULT_K_SAMPLES};

use config::FileOverlay;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<stagecut::Error> for CliError {
    fn from(e: stagecut::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "stagecut", version, about = "Timestep clustering for multistage diffusion models")]
pub struct Cli {
    /// `key = value` file supplying defaults for flags not given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print t, s, sigma and SNR on a uniform time grid as CSV.
    ScheduleTable {
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Number of rows.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Evaluate the optimal denoiser at one query point.
    Denoise {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// CSV file whose first row is the noisy query point.
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        t: f64,
        /// Print the full vectors, not only summaries.
        #[arg(long)]
        full: bool,
    },
    /// Run a Monte-Carlo similarity study and write a sample store.
    Similarity {
        #[arg(long, value_enum)]
        mode: StudyMode,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        eta: Option<f64>,
        /// Number of Monte-Carlo samples.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Store CSV; the metadata sidecar goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Three-interval partition from an endpoint store.
    Cluster3 {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Number of grid points on [t_min, 1].
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        min_support: Option<usize>,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// n-interval partition from a pair store.
    Clustern {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// `default` for the fixed 41-point grid, or a point count on [t_min, 1].
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Uniform-t or uniform-log-SNR partition.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Integrate the probability-flow ODE from t = 1 to t_min.
    Sample {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Seed for the Gaussian start; ignored with --init.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV file whose first row is the starting point.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        time_grid: Option<TimeGridArg>,
        /// Write the trajectory as CSV (t, x0, x1, ...).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Keep every n-th state in the trajectory.
        #[arg(long, default_value_t = 1)]
        record_every: usize,
    },
    /// Weighted sampling GFLOPs and training PFLOPs.
    Budget {
        /// CSV with header `gflops,steps`, one row per stage.
        #[arg(long)]
        stages: PathBuf,
        #[arg(long)]
        iterations: Option<f64>,
    },
    /// Convert between a VP time and the VE-equivalent noise level.
    Convert {
        #[arg(long, conflicts_with = "sigma", required_unless_present = "sigma")]
        t: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyMode {
    Endpoint,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    UniformT,
    UniformLogsnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    WithinDissimilarity,
    WithinSimilarityLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Euler,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimeGridArg {
    UniformT,
    LogSigma,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScheduleArgs {
    /// `vp` or `ve`.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub beta_d: Option<f64>,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// CSV dataset with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CIFAR-10 binary batch files.
    #[arg(long, num_args = 1..)]
    pub cifar: Vec<PathBuf>,
    /// Directory holding the CIFAR-10 training batches; falls back to the
    /// data-dir environment variable.
    #[arg(long)]
    pub cifar_dir: Option<PathBuf>,
    /// Use a seeded random subset of this many points.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub subsample_seed: u64,
    /// Target pixel range `lo,hi`, e.g. `0,1` or `-1,1`.
    #[arg(long, allow_hyphen_values = true)]
    pub data_range: Option<String>,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let overlay = match &cli.config {
        Some(path) => FileOverlay::load(path)?,
        None => FileOverlay::default(),
    };
    match cli.command {
        Command::ScheduleTable { schedule, grid } => schedule_table(&overlay, &schedule, grid, out),
        Command::Denoise { data, schedule, query, t, full } => {
            denoise(&overlay, &data, &schedule, &query, t, full, out)
        }
        Command::Similarity { mode, data, schedule, eta, k, seed, threads, out: path } => {
            let study = StudyArgs { mode, eta, k, seed, threads };
            similarity_cmd(&overlay, &data, &schedule, &study, &path, out)
        }
        Command::Cluster3 { store, alpha, grid, min_support, schedule } => {
            cluster3(&overlay, &store, alpha, grid, min_support, &schedule, out)
        }
        Command::Clustern { store, n, grid, objective, schedule } => {
            clustern(&overlay, &store, n, grid, objective, &schedule, out)
        }
        Command::Baseline { method, n, grid, schedule } => baseline(&overlay, method, n, grid, &schedule, out),
        Command::Sample { data, schedule, seed, init, steps, method, time_grid, trajectory, record_every } => {
            let opts = SampleArgs { seed, init, steps, method, time_grid, trajectory, record_every };
            sample_cmd(&overlay, &data, &schedule, &opts, out)
        }
        Command::Budget { stages, iterations } => budget(&stages, iterations, out),
        Command::Convert { t, sigma, schedule } => convert(&overlay, t, sigma, &schedule, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(format!("writing output: {e}")))
}

fn emit_json(out: &mut dyn Write, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    emit(out, &format!("{text}\n"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn resolve_schedule(overlay: &FileOverlay, args: &ScheduleArgs) -> CliResult<NoiseSchedule> {
    let kind = overlay.resolve(args.schedule.clone(), "schedule", "vp".to_string())?;
    match kind.as_str() {
        "vp" => {
            let beta_d = overlay.resolve(args.beta_d, "beta_d", DEFAULT_BETA_D)?;
            let beta_min = overlay.resolve(args.beta_min, "beta_min", DEFAULT_BETA_MIN)?;
            let t_min = overlay.resolve(args.t_min, "t_min", DEFAULT_T_MIN)?;
            Ok(NoiseSchedule::Vp(VpSchedule::new(beta_d, beta_min, t_min).map_err(usage)?))
        }
        "ve" => {
            let sigma_min = overlay.resolve(args.sigma_min, "sigma_min", 0.002)?;
            let sigma_max = overlay.resolve(args.sigma_max, "sigma_max", 80.0)?;
            Ok(NoiseSchedule::Ve(VeSchedule::new(sigma_min, sigma_max).map_err(usage)?))
        }
        other => Err(CliError::Usage(format!("--schedule must be `vp` or `ve`, got {other:?}"))),
    }
}

fn usage(e: stagecut::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn require_vp(sched: NoiseSchedule, what: &str) -> CliResult<VpSchedule> {
    match sched {
        NoiseSchedule::Vp(vp) => Ok(vp),
        NoiseSchedule::Ve(_) => Err(CliError::Usage(format!("{what} needs the VP schedule"))),
    }
}

fn parse_range(raw: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--data-range expects `lo,hi`, got {raw:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn load_data(overlay: &FileOverlay, args: &DataArgs) -> CliResult<Dataset> {
    let mut d = if let Some(path) = &args.data {
        dataset::load_csv(path)?
    } else if !args.cifar.is_empty() {
        dataset::load_cifar10(&args.cifar)?
    } else {
        let dir = args.cifar_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        let Some(dir) = dir else {
            return Err(CliError::Usage(format!(
                "no dataset given: pass --data, --cifar or --cifar-dir, or set {DATA_DIR_ENV}"
            )));
        };
        dataset::load_cifar10(&dataset::cifar10_train_paths(&dir))?
    };
    if let Some(raw) = overlay.resolve_opt(args.data_range.clone(), "data_range")? {
        let (lo, hi) = parse_range(&raw)?;
        d = d.rescaled(lo, hi)?;
    }
    if let Some(m) = args.subsample {
        d = dataset::subsample(&d, m, args.subsample_seed)?;
    }
    Ok(d)
}

fn first_row(path: &Path) -> CliResult<Vec<f64>> {
    let d = dataset::load_csv(path)?;
    Ok(d.point(0).to_vec())
}

fn schedule_table(
    overlay: &FileOverlay,
    args: &ScheduleArgs,
    grid: Option<usize>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let sched = resolve_schedule(overlay, args)?;
    let rows = overlay.resolve(grid, "grid", 101)?;
    if rows < 2 {
        return Err(CliError::Usage("--grid needs at least 2 rows".into()));
    }
    let t_min = sched.t_min();
    let mut text = String::from("t,s,sigma,snr\n");
    for i in 0..rows {
        let t = if i + 1 == rows { 1.0 } else { t_min + (1.0 - t_min) * i as f64 / (rows - 1) as f64 };
        let k = sched.kernel_at(t)?;
        let snr = sched.snr(t)?;
        text.push_str(&format!(
            "{},{},{},{}\n",
            similarity::fmt17(t),
            similarity::fmt17(k.s),
            similarity::fmt17(k.sigma),
            similarity::fmt17(snr)
        ));
    }
    emit(out, &text)
}

#[derive(Serialize)]
struct VecSummary {
    dim: usize,
    min: f64,
    max: f64,
    mean: f64,
    l2_norm: f64,
}

fn summarize(v: &[f64]) -> VecSummary {
    VecSummary {
        dim: v.len(),
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
        l2_norm: v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

fn denoise(
    overlay: &FileOverlay,
    data: &DataArgs,
    sched: &ScheduleArgs,
    query: &Path,
    t: f64,
    full: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let sched = resolve_schedule(overlay, sched)?;
    let d = load_data(overlay, data)?;
    let x = first_row(query)?;
    let k = sched.denoising_kernel(t)?;
    let eval = OptimalDenoiser::new(&d).optimal_eps(&k, &x)?;
    let mut result = json!({
        "t": t,
        "s": k.s,
        "sigma": k.sigma,
        "y_hat_summary": to_value(&summarize(&eval.y_hat)),
        "eps_star_summary": to_value(&summarize(&eval.eps_star)),
        "log_partition": eval.log_partition,
        "max_log_weight": eval.max_log_weight,
        "config": { "schedule": to_value(&sched), "dataset": to_value(&d.fingerprint()) },
    });
    if full {
        result["y_hat"] = to_value(&eval.y_hat);
        result["eps_star"] = to_value(&eval.eps_star);
    }
    emit_json(out, &result)
}

struct StudyArgs {
    mode: StudyMode,
    eta: Option<f64>,
    k: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
}

fn similarity_cmd(
    overlay: &FileOverlay,
    data: &DataArgs,
    sched: &ScheduleArgs,
    study: &StudyArgs,
    path: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let sched = resolve_schedule(overlay, sched)?;
    let base = SimilarityConfig::for_schedule(&sched);
    let cfg = SimilarityConfig {
        eta: overlay.resolve(study.eta, "eta", DEFAULT_ETA)?,
        k_samples: overlay.resolve(study.k, "k", DEFAULT_K_SAMPLES)?,
        seed: overlay.resolve(study.seed, "seed", 0)?,
        ..base
    };
    cfg.validate().map_err(usage)?;
    let threads = overlay.resolve_opt(study.threads, "threads")?;
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let d = load_data(overlay, data)?;
    let den = OptimalDenoiser::new(&d);
    let kind = match study.mode {
        StudyMode::Endpoint => StoreKind::Endpoint,
        StudyMode::Pair => StoreKind::Pair,
    };
    let meta = StoreMeta {
        kind,
        config: cfg,
        schedule: sched,
        dataset: d.fingerprint(),
        dataset_source: d.source().to_string(),
    };
    let samples = match study.mode {
        StudyMode::Endpoint => {
            let s = similarity::run_endpoint_study(&den, &sched, &cfg, threads)?;
            similarity::write_endpoint_store(path, &s, &meta)?;
            s.len()
        }
        StudyMode::Pair => {
            let s = similarity::run_pair_study(&den, &sched, &cfg, threads)?;
            similarity::write_pair_store(path, &s, &meta)?;
            s.len()
        }
    };
    emit_json(
        out,
        &json!({
            "store": path.display().to_string(),
            "sidecar": similarity::sidecar_path(path).display().to_string(),
            "samples": samples,
            "config": to_value(&meta),
        }),
    )
}

fn partition_json(p: &Partition, config: Value) -> Value {
    let mut v = to_value(p);
    v["config"] = config;
    v
}

/// Schedule for a store command: the sidecar's when present, else flags.
fn store_schedule(overlay: &FileOverlay, args: &ScheduleArgs, meta: &Option<StoreMeta>) -> CliResult<NoiseSchedule> {
    match meta {
        Some(m) => Ok(m.schedule),
        None => resolve_schedule(overlay, args),
    }
}

fn cluster3(
    overlay: &FileOverlay,
    store: &Path,
    alpha: Option<f64>,
    grid: Option<usize>,
    min_support: Option<usize>,
    sched: &ScheduleArgs,
    out: &mut dyn Write,
) -> CliResult<()> {
    let meta = similarity::read_store_meta(store)?;
    if let Some(m) = &meta {
        if m.kind != StoreKind::Endpoint {
            return Err(CliError::Usage(format!(
                "{} is a pair store; cluster3 needs an endpoint store",
                store.display()
            )));
        }
    }
    let sched = store_schedule(overlay, sched, &meta)?;
    let alpha = overlay.resolve(alpha, "alpha", cluster::DEFAULT_ALPHA)?;
    let points = overlay.resolve(grid, "grid", cluster::DEFAULT_GRID_POINTS)?;
    let min_support = overlay.resolve(min_support, "min_support", cluster::DEFAULT_MIN_SUPPORT)?;
    let t_lo = meta.as_ref().map_or(sched.t_min(), |m| m.config.t_lo);
    let grid = GridSpec::threshold_default(t_lo, points).map_err(usage)?;
    let samples = similarity::read_endpoint_csv(store)?;
    let p = cluster::solve_three_interval(&samples, alpha, &grid, min_support)?
        .echo("alpha", alpha)
        .echo("grid_points", points)
        .echo("min_support", min_support);
    let config = json!({
        "store": store.display().to_string(),
        "alpha": alpha,
        "grid_points": points,
        "min_support": min_support,
        "schedule": to_value(&sched),
        "study": meta.as_ref().map(|m| to_value(&m.config)),
        "dataset": meta.as_ref().map(|m| to_value(&m.dataset)),
    });
    emit_json(out, &partition_json(&p, config))
}

fn clustern(
    overlay: &FileOverlay,
    store: &Path,
    n: Option<usize>,
    grid: Option<String>,
    objective: Option<ObjectiveArg>,
    sched: &ScheduleArgs,
    out: &mut dyn Write,
) -> CliResult<()> {
    let n = overlay.resolve(n, "n", 3)?;
    if n < 2 {
        return Err(CliError::Usage(format!("--n must be at least 2, got {n}")));
    }
    let meta = similarity::read_store_meta(store)?;
    if let Some(m) = &meta {
        if m.kind != StoreKind::Pair {
            return Err(CliError::Usage(format!(
                "{} is an endpoint store; clustern needs a pair store",
                store.display()
            )));
        }
    }
    let sched = store_schedule(overlay, sched, &meta)?;
    let grid_raw = overlay.resolve(grid, "grid", "default".to_string())?;
    let grid = if grid_raw == "default" {
        GridSpec::pair_default()
    } else {
        let count: usize = grid_raw
            .parse()
            .map_err(|_| CliError::Usage(format!("--grid must be `default` or a point count, got {grid_raw:?}")))?;
        GridSpec::threshold_default(sched.t_min(), count).map_err(usage)?
    };
    let objective = match objective {
        Some(ObjectiveArg::WithinDissimilarity) => Objective::WithinDissimilarity,
        Some(ObjectiveArg::WithinSimilarityLiteral) => Objective::WithinSimilarityLiteral,
        None => match overlay.get("objective") {
            None | Some("within-dissimilarity") => Objective::WithinDissimilarity,
            Some("within-similarity-literal") => Objective::WithinSimilarityLiteral,
            Some(other) => return Err(CliError::Usage(format!("unknown objective {other:?}"))),
        },
    };
    let samples = similarity::read_pair_csv(store)?;
    let p = cluster::solve_n_interval(&samples, n, &grid, objective)?.echo("n", n).echo("grid", &grid_raw);
    let config = json!({
        "store": store.display().to_string(),
        "n": n,
        "grid": grid_raw,
        "objective": to_value(&objective),
        "schedule": to_value(&sched),
        "study": meta.as_ref().map(|m| to_value(&m.config)),
        "dataset": meta.as_ref().map(|m| to_value(&m.dataset)),
    });
    emit_json(out, &partition_json(&p, config))
}

fn baseline(
    overlay: &FileOverlay,
    method: BaselineMethod,
    n: Option<usize>,
    grid: Option<usize>,
    sched: &ScheduleArgs,
    out: &mut dyn Write,
) -> CliResult<()> {
    let n = overlay.resolve(n, "n", 3)?;
    if n < 2 {
        return Err(CliError::Usage(format!("--n must be at least 2, got {n}")));
    }
    let sched = resolve_schedule(overlay, sched)?;
    let points = overlay.resolve(grid, "grid", cluster::DEFAULT_GRID_POINTS)?;
    let g = GridSpec::threshold_default(sched.t_min(), points).map_err(usage)?;
    let p = match method {
        BaselineMethod::UniformT => cluster::baseline_uniform_t(n, &g)?,
        BaselineMethod::UniformLogsnr => {
            cluster::baseline_uniform_logsnr(n, &require_vp(sched, "uniform-logsnr")?, &g)?
        }
    };
    let config = json!({ "n": n, "grid_points": points, "schedule": to_value(&sched) });
    emit_json(out, &partition_json(&p, config))
}

struct SampleArgs {
    seed: Option<u64>,
    init: Option<PathBuf>,
    steps: Option<usize>,
    method: Option<MethodArg>,
    time_grid: Option<TimeGridArg>,
    trajectory: Option<PathBuf>,
    record_every: usize,
}

fn sample_cmd(
    overlay: &FileOverlay,
    data: &DataArgs,
    sched: &ScheduleArgs,
    args: &SampleArgs,
    out: &mut dyn Write,
) -> CliResult<()> {
    let vp = require_vp(resolve_schedule(overlay, sched)?, "sample")?;
    let steps = overlay.resolve(args.steps, "steps", 200)?;
    let method = match args.method {
        Some(MethodArg::Euler) => OdeMethod::Euler,
        Some(MethodArg::Heun) => OdeMethod::Heun,
        None => match overlay.get("method") {
            None | Some("heun") => OdeMethod::Heun,
            Some("euler") => OdeMethod::Euler,
            Some(other) => return Err(CliError::Usage(format!("unknown ODE method {other:?}"))),
        },
    };
    let grid = match args.time_grid {
        Some(TimeGridArg::UniformT) => TimeGrid::UniformT,
        Some(TimeGridArg::LogSigma) => TimeGrid::UniformLogSigma,
        None => match overlay.get("time_grid") {
            None | Some("log-sigma") => TimeGrid::UniformLogSigma,
            Some("uniform-t") => TimeGrid::UniformT,
            Some(other) => return Err(CliError::Usage(format!("unknown time grid {other:?}"))),
        },
    };
    if args.trajectory.is_some() && args.record_every == 0 {
        return Err(CliError::Usage("--record-every must be at least 1".into()));
    }
    let d = load_data(overlay, data)?;
    let init = match &args.init {
        Some(path) => SampleInit::Point(first_row(path)?),
        None => SampleInit::Seed(overlay.resolve(args.seed, "seed", 0)?),
    };
    let opts = SampleOptions {
        steps,
        method,
        grid,
        record_every: if args.trajectory.is_some() { args.record_every } else { 0 },
    };
    let run = sampler::sample(&OptimalDenoiser::new(&d), &vp, init, &opts)?;
    if let (Some(path), Some(traj)) = (&args.trajectory, &run.trajectory) {
        let mut text = String::from("t");
        for j in 0..d.dim() {
            text.push_str(&format!(",x{j}"));
        }
        text.push('\n');
        for (t, x) in traj {
            text.push_str(&similarity::fmt17(*t));
            for v in x {
                text.push(',');
                text.push_str(&similarity::fmt17(*v));
            }
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    let header: Vec<String> = (0..d.dim()).map(|j| format!("x{j}")).collect();
    let row: Vec<String> = run.x_final.iter().map(|v| similarity::fmt17(*v)).collect();
    emit(out, &format!("{}\n{}\n", header.join(","), row.join(",")))
}

fn budget(stages: &Path, iterations: Option<f64>, out: &mut dyn Write) -> CliResult<()> {
    let mut reader =
        csv::Reader::from_path(stages).map_err(|e| CliError::Runtime(format!("{}: {e}", stages.display())))?;
    let mut list = Vec::new();
    for (row, rec) in reader.deserialize::<BTreeMap<String, String>>().enumerate() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("{}: {e}", stages.display())))?;
        let field = |name: &str| {
            rec.get(name).ok_or_else(|| CliError::Runtime(format!("{}: missing column `{name}`", stages.display())))
        };
        let bad =
            |name: &str, v: &str| CliError::Runtime(format!("{} row {}: bad {name} {v:?}", stages.display(), row + 1));
        let g = field("gflops")?;
        let s = field("steps")?;
        list.push(StageBudget {
            gflops_per_eval: g.trim().parse().map_err(|_| bad("gflops", g))?,
            nfe_steps: s.trim().parse().map_err(|_| bad("steps", s))?,
        });
    }
    let weighted = weighted_gflops(&list)?;
    let mut result = json!({
        "stages": to_value(&list),
        "weighted_gflops": weighted,
    });
    if let Some(iters) = iterations {
        let p = training_pflops(&TrainingBudget { iterations: iters, gflops_per_eval: weighted })?;
        result["iterations"] = json!(iters);
        result["training_pflops"] = json!(p);
        result["training_pflops_rounded"] = json!(round_half_up(p, 2));
    }
    emit_json(out, &result)
}

fn convert(
    overlay: &FileOverlay,
    t: Option<f64>,
    sigma: Option<f64>,
    sched: &ScheduleArgs,
    out: &mut dyn Write,
) -> CliResult<()> {
    let vp = require_vp(resolve_schedule(overlay, sched)?, "convert")?;
    let t = match (t, sigma) {
        (Some(t), _) => t,
        (None, Some(sigma)) => {
            if !(sigma > 0.0) {
                return Err(CliError::Usage(format!("--sigma must be positive, got {sigma}")));
            }
            vp.t_of_snr(1.0 / (sigma * sigma))?
        }
        (None, None) => return Err(CliError::Usage("pass --t or --sigma".into())),
    };
    emit_json(
        out,
        &json!({
            "t": t,
            "sigma_ve": vp.ve_sigma_equivalent(t)?,
            "snr": vp.snr(t)?,
            "schedule": to_value(&vp),
        }),
    )
}
