//! Command-line front end: training runs, frozen-model evaluation,
//! preference inference, and frontier dumps from the oracle and the exact
//! planner.
//!
//! Every subcommand accepts `--config FILE`, a flat `key = value` file with
//! `#` comments whose keys mirror the long flags; explicit flags override
//! file values. All randomness is seeded — two invocations with the same
//! flags produce byte-identical outputs — and output files are written to a
//! temporary sibling and renamed into place, so an interrupted run never
//! leaves a partial file behind. Commands never modify their input files.
//! Errors exit nonzero with a diagnostic on stderr.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::adapt::{infer_preference, GenerationRecord, InferenceConfig};
use crate::envs::{Benchmark, DstEnv, DstMap, VectorEnv};
use crate::learner::{train, LogRow, TrainConfig, Variant};
use crate::metrics::{evaluate_model, EvalConfig, EvalReport, PrefRow};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::oracle::benchmark_ccs;
use crate::pref::Preference;
use crate::tabular::{
    dst_momdp, envelope_value_iteration, ftn_momdp, greedy_policy, greedy_rollout_returns,
    preference_grid, DEFAULT_VI_TOLERANCE,
};
use crate::{Error, ExactScalar, Result, TrainScalar};

/// Tree depth used when `--env ftn` gives none.
pub const DEFAULT_FTN_DEPTH: usize = 6;
/// Tree generation seed used when `--env ftn` gives none.
pub const DEFAULT_FTN_SEED: u64 = 0;
/// Discount used when `--env ftn` gives none.
pub const DEFAULT_FTN_GAMMA: f64 = 0.99;
/// Hindsight preferences per update when `train` gives none.
pub const DEFAULT_TRAIN_N_OMEGA: usize = 32;
/// Planner grid size for two-objective tasks.
pub const DEFAULT_GRID_SIZE_LINE: usize = 201;
/// Planner grid size for higher-dimensional tasks.
pub const DEFAULT_GRID_SIZE_SIMPLEX: usize = 512;

/// Multi-objective Q-learning over linear preferences.
#[derive(Debug, Parser)]
#[command(name = "morl", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a preference-conditioned Q-network; writes checkpoint + log CSV.
    Train(TrainArgs),
    /// Score a checkpoint against the task's brute-force frontier.
    Evaluate(EvaluateArgs),
    /// Recover a hidden preference with a frozen checkpoint.
    Adapt(AdaptArgs),
    /// Dump the brute-force frontier with convex-coverage membership flags.
    Oracle(OracleArgs),
    /// Dump the frontier recovered by exact value iteration.
    Tabular(TabularArgs),
}

/// Runs one parsed invocation to completion.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Adapt(args) => run_adapt(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Tabular(args) => run_tabular(args),
    }
}

/// Flat `key = value` run config backing the `--config` flag.
#[derive(Debug, Default)]
struct KvConfig {
    pairs: Vec<(String, String)>,
}

impl KvConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::invalid(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text)
            }
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse("run config", format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let key = key.trim().to_string();
            if pairs.iter().any(|(k, _)| *k == key) {
                return Err(Error::parse("run config", key, "key given more than once"));
            }
            pairs.push((key, value.trim().to_string()));
        }
        Ok(Self { pairs })
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !known.contains(&k.as_str()) {
                return Err(Error::parse("run config", k.clone(), "unknown key for this subcommand"));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.pairs.iter().find(|(k, _)| k == key) {
            None => Ok(None),
            Some((_, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::parse("run config", key, format!("bad value {v:?}: {e}"))),
        }
    }
}

/// Flag value if given, else the config file's, else `None`.
fn pick<T: FromStr>(flag: Option<T>, cfg: &KvConfig, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::invalid(format!("{what} is required (flag or config key)")))
}

/// Loads a checkpoint with the path included in any I/O error.
fn load_model(path: &Path) -> Result<crate::nn::MlpParams<TrainScalar>> {
    load_checkpoint::<TrainScalar>(path).map_err(|e| match e {
        Error::Io(io) => Error::invalid(format!("cannot read checkpoint {}: {io}", path.display())),
        other => other,
    })
}

/// Writes `text` to a temporary sibling of `path` and renames it into place.
fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("output path {} has no file name", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Prints CSV text to stdout or writes it to `out` atomically.
fn emit_csv(out: Option<&Path>, text: &str, what: &str) -> Result<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            write_text_atomic(path, text)?;
            println!("wrote {what} to {}", path.display());
            Ok(())
        }
    }
}

/// Task selection, shared by every subcommand.
#[derive(Debug, Args)]
struct EnvArgs {
    /// Task: `dst`, `ftn`, or a path to an env config file.
    #[arg(long)]
    env: Option<String>,
    /// Tree depth (`ftn` only).
    #[arg(long)]
    depth: Option<usize>,
    /// Tree generation seed (`ftn` only).
    #[arg(long)]
    env_seed: Option<u64>,
    /// Discount override (`dst`/`ftn`; env config files carry their own).
    #[arg(long)]
    gamma: Option<f64>,
}

const ENV_KEYS: [&str; 4] = ["env", "depth", "env_seed", "gamma"];

fn resolve_env(args: &EnvArgs, cfg: &KvConfig) -> Result<Benchmark> {
    let name: String = require(pick(args.env.clone(), cfg, "env")?, "--env")?;
    let depth = pick(args.depth, cfg, "depth")?;
    let env_seed = pick(args.env_seed, cfg, "env_seed")?;
    let gamma = pick(args.gamma, cfg, "gamma")?;
    match name.as_str() {
        "dst" => {
            if depth.is_some() || env_seed.is_some() {
                return Err(Error::invalid("--depth and --env-seed apply only to ftn"));
            }
            let map = DstMap::default_map();
            let map = match gamma {
                None => map,
                Some(g) => {
                    let treasures =
                        map.treasures().iter().map(|t| (t.row, t.col, t.value)).collect();
                    DstMap::new(
                        map.grid_width(),
                        map.grid_height(),
                        treasures,
                        map.time_penalty(),
                        g,
                        map.spec().max_episode_steps,
                    )?
                }
            };
            Ok(Benchmark::Dst(DstEnv::new(map)))
        }
        "ftn" => Benchmark::ftn(
            depth.unwrap_or(DEFAULT_FTN_DEPTH),
            env_seed.unwrap_or(DEFAULT_FTN_SEED),
            gamma.unwrap_or(DEFAULT_FTN_GAMMA),
        ),
        other => {
            let path = Path::new(other);
            if !path.exists() {
                return Err(Error::invalid(format!(
                    "unknown task {other:?}: expected `dst`, `ftn`, or a path to an env config file"
                )));
            }
            if depth.is_some() || env_seed.is_some() || gamma.is_some() {
                return Err(Error::invalid(
                    "env config files carry their own parameters; drop --depth/--env-seed/--gamma",
                ));
            }
            Benchmark::from_config_file(path)
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Run config file (`key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Backup filter: `envelope` or `scalarized`.
    #[arg(long)]
    variant: Option<String>,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Hindsight preferences per update (N_ω).
    #[arg(long)]
    n_omega: Option<usize>,
    /// Transitions per minibatch (N_τ).
    #[arg(long)]
    n_tau: Option<usize>,
    /// Exploration rate at episode 0; decays linearly to 0.
    #[arg(long)]
    epsilon_start: Option<f64>,
    /// Homotopy curvature κ.
    #[arg(long)]
    kappa: Option<f64>,
    /// Updates over which λ climbs to 1 (0 derives it from the budget).
    #[arg(long)]
    homotopy_updates: Option<usize>,
    /// Gradient updates between target-network syncs.
    #[arg(long)]
    target_sync: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    /// Master seed for every random stream in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training log CSV output path.
    #[arg(long)]
    log: Option<PathBuf>,
}

const TRAIN_KEYS: [&str; 17] = [
    "env",
    "depth",
    "env_seed",
    "gamma",
    "variant",
    "episodes",
    "n_omega",
    "n_tau",
    "epsilon_start",
    "kappa",
    "homotopy_updates",
    "target_sync",
    "learning_rate",
    "buffer_capacity",
    "seed",
    "checkpoint",
    "log",
];

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = KvConfig::load(args.config.as_deref())?;
    cfg.check_known(&TRAIN_KEYS)?;
    let mut env = resolve_env(&args.env, &cfg)?;
    let variant_name =
        pick(args.variant, &cfg, "variant")?.unwrap_or_else(|| "envelope".to_string());
    let variant = Variant::parse(&variant_name)?;
    let episodes = require(pick(args.episodes, &cfg, "episodes")?, "--episodes")?;
    let n_omega =
        pick(args.n_omega, &cfg, "n_omega")?.unwrap_or(DEFAULT_TRAIN_N_OMEGA);
    let seed = require(pick(args.seed, &cfg, "seed")?, "--seed")?;

    let mut config = TrainConfig::new(episodes, n_omega, seed);
    if let Some(v) = pick(args.n_tau, &cfg, "n_tau")? {
        config.n_tau = v;
    }
    if let Some(v) = pick(args.epsilon_start, &cfg, "epsilon_start")? {
        config.epsilon_start = v;
    }
    if let Some(v) = pick(args.kappa, &cfg, "kappa")? {
        config.kappa = v;
    }
    if let Some(v) = pick(args.homotopy_updates, &cfg, "homotopy_updates")? {
        config.homotopy_updates = v;
    }
    if let Some(v) = pick(args.target_sync, &cfg, "target_sync")? {
        config.target_sync = v;
    }
    if let Some(v) = pick(args.learning_rate, &cfg, "learning_rate")? {
        config.learning_rate = v;
    }
    if let Some(v) = pick(args.buffer_capacity, &cfg, "buffer_capacity")? {
        config.buffer_capacity = v;
    }
    let checkpoint = pick(args.checkpoint, &cfg, "checkpoint")?
        .unwrap_or_else(|| PathBuf::from("checkpoint.moqnet"));
    let log =
        pick(args.log, &cfg, "log")?.unwrap_or_else(|| PathBuf::from("train_log.csv"));

    let outcome = train::<TrainScalar>(&mut env, &config, variant)?;
    save_checkpoint(&outcome.params, &checkpoint)?;
    let mut text = String::from(LogRow::CSV_HEADER);
    text.push('\n');
    for row in &outcome.log {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    write_text_atomic(&log, &text)?;

    println!(
        "trained {} on {}: episodes={} updates={} checkpoint={} log={}",
        variant.name(),
        env.kind_name(),
        episodes,
        outcome.updates,
        checkpoint.display(),
        log.display()
    );
    if variant == Variant::Envelope {
        let (held, checked) = outcome.dominance;
        println!("envelope target utility >= scalarized on {held}/{checked} backup scans");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Run config file (`key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint to score.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Seed for evaluation preference sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Print one metric (`cr`, `ae`, `aq`, `ut`) instead of all of them.
    #[arg(long)]
    metric: Option<String>,
    /// Preferences sampled for the coverage frontier.
    #[arg(long)]
    cr_samples: Option<usize>,
    /// Preferences sampled for the utility metrics.
    #[arg(long)]
    ae_samples: Option<usize>,
    /// Coverage match tolerance (relative L1).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Match predicted Q-vectors instead of executed returns.
    #[arg(long)]
    predicted: bool,
    /// Adaptation-quality scale α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Write the scalar metrics as a one-row CSV here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-preference utility table CSV here.
    #[arg(long)]
    table: Option<PathBuf>,
}

const EVALUATE_KEYS: [&str; 14] = [
    "env",
    "depth",
    "env_seed",
    "gamma",
    "checkpoint",
    "seed",
    "metric",
    "cr_samples",
    "ae_samples",
    "epsilon",
    "predicted",
    "alpha",
    "report",
    "table",
];

/// Header of the one-row scalar metrics CSV written by `evaluate --report`.
pub const REPORT_CSV_HEADER: &str = "precision,recall,cr_f1,ae,ae_excluded,aq,avg_utility";

fn report_csv(report: &EvalReport) -> String {
    format!(
        "{}\n{},{},{},{},{},{},{}\n",
        REPORT_CSV_HEADER,
        report.precision,
        report.recall,
        report.cr_f1,
        report.ae,
        report.ae_excluded,
        report.aq,
        report.avg_utility
    )
}

fn summary_line(report: &EvalReport, metric: Option<&str>) -> Result<String> {
    match metric {
        None => Ok(format!(
            "precision={:.6} recall={:.6} f1={:.6} ae={:.6} aq={:.6} avg_utility={:.6}",
            report.precision, report.recall, report.cr_f1, report.ae, report.aq,
            report.avg_utility
        )),
        Some("cr") => Ok(format!(
            "precision={:.6} recall={:.6} f1={:.6}",
            report.precision, report.recall, report.cr_f1
        )),
        Some("ae") => Ok(format!("ae={:.6}", report.ae)),
        Some("aq") => Ok(format!("aq={:.6}", report.aq)),
        Some("ut") => Ok(format!("avg_utility={:.6}", report.avg_utility)),
        Some(other) => Err(Error::invalid(format!(
            "unknown metric {other:?}: expected cr, ae, aq or ut"
        ))),
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = KvConfig::load(args.config.as_deref())?;
    cfg.check_known(&EVALUATE_KEYS)?;
    let mut env = resolve_env(&args.env, &cfg)?;
    let checkpoint: PathBuf =
        require(pick(args.checkpoint, &cfg, "checkpoint")?, "--checkpoint")?;
    let model = load_model(&checkpoint)?;
    let seed = require(pick(args.seed, &cfg, "seed")?, "--seed")?;

    let mut config = EvalConfig::new(seed);
    if let Some(v) = pick(args.cr_samples, &cfg, "cr_samples")? {
        config.cr_samples = v;
    }
    if let Some(v) = pick(args.ae_samples, &cfg, "ae_samples")? {
        config.ae_samples = v;
    }
    config.cr_epsilon = pick(args.epsilon, &cfg, "epsilon")?;
    config.predicted = args.predicted || cfg.get::<bool>("predicted")?.unwrap_or(false);
    config.alpha = pick(args.alpha, &cfg, "alpha")?;

    let metric = pick(args.metric, &cfg, "metric")?;
    let report = evaluate_model(&mut env, &model, &config)?;
    let summary = summary_line(&report, metric.as_deref())?;
    println!("{summary}");

    if let Some(path) = pick(args.report, &cfg, "report")? {
        write_text_atomic(&path, &report_csv(&report))?;
        println!("wrote metrics to {}", path.display());
    }
    if let Some(path) = pick(args.table, &cfg, "table")? {
        let m = env.spec().objective_count;
        let mut text = PrefRow::csv_header(m);
        text.push('\n');
        for row in &report.table {
            text.push_str(&row.to_csv());
            text.push('\n');
        }
        write_text_atomic(&path, &text)?;
        println!("wrote utility table to {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Run config file (`key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint to adapt with; its weights stay frozen.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Hidden preference: `one_hot:K` or comma-separated weights.
    #[arg(long)]
    hidden: Option<String>,
    /// Episode budget for the search.
    #[arg(long)]
    budget: Option<usize>,
    /// Candidates per generation.
    #[arg(long)]
    population: Option<usize>,
    /// Fraction of each generation kept as the elite.
    #[arg(long)]
    elite_fraction: Option<f64>,
    /// Initial candidate spread σ.
    #[arg(long)]
    sigma_init: Option<f64>,
    /// Multiplies σ after each generation.
    #[arg(long)]
    sigma_decay: Option<f64>,
    /// σ never decays below this.
    #[arg(long)]
    sigma_floor: Option<f64>,
    /// Weight of the score-function gradient step.
    #[arg(long)]
    step_size: Option<f64>,
    /// Search seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-generation history CSV output path.
    #[arg(long)]
    history: Option<PathBuf>,
}

const ADAPT_KEYS: [&str; 15] = [
    "env",
    "depth",
    "env_seed",
    "gamma",
    "checkpoint",
    "hidden",
    "budget",
    "population",
    "elite_fraction",
    "sigma_init",
    "sigma_decay",
    "sigma_floor",
    "step_size",
    "seed",
    "history",
];

/// Parses a hidden-preference spec: `one_hot:K` or comma-separated weights.
fn parse_hidden(spec: &str, m: usize) -> Result<Preference<f64>> {
    if let Some(rest) = spec.strip_prefix("one_hot:") {
        let k = rest.trim().parse::<usize>().map_err(|e| {
            Error::parse("hidden preference", "one_hot index", format!("{e}"))
        })?;
        return Preference::one_hot(m, k);
    }
    let weights = spec
        .split(',')
        .map(|w| {
            w.trim().parse::<f64>().map_err(|e| {
                Error::parse("hidden preference", "weights", format!("bad weight {w:?}: {e}"))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Preference::new(weights)
}

fn run_adapt(args: AdaptArgs) -> Result<()> {
    let cfg = KvConfig::load(args.config.as_deref())?;
    cfg.check_known(&ADAPT_KEYS)?;
    let mut env = resolve_env(&args.env, &cfg)?;
    let m = env.spec().objective_count;
    let checkpoint: PathBuf =
        require(pick(args.checkpoint, &cfg, "checkpoint")?, "--checkpoint")?;
    let model = load_model(&checkpoint)?;
    let hidden_spec: String = require(pick(args.hidden, &cfg, "hidden")?, "--hidden")?;
    let hidden = parse_hidden(&hidden_spec, m)?;
    let seed = require(pick(args.seed, &cfg, "seed")?, "--seed")?;

    let mut config = InferenceConfig::new(seed);
    if let Some(v) = pick(args.budget, &cfg, "budget")? {
        config.budget = v;
    }
    if let Some(v) = pick(args.population, &cfg, "population")? {
        config.population = v;
    }
    if let Some(v) = pick(args.elite_fraction, &cfg, "elite_fraction")? {
        config.elite_fraction = v;
    }
    if let Some(v) = pick(args.sigma_init, &cfg, "sigma_init")? {
        config.sigma_init = v;
    }
    if let Some(v) = pick(args.sigma_decay, &cfg, "sigma_decay")? {
        config.sigma_decay = v;
    }
    if let Some(v) = pick(args.sigma_floor, &cfg, "sigma_floor")? {
        config.sigma_floor = v;
    }
    if let Some(v) = pick(args.step_size, &cfg, "step_size")? {
        config.step_size = v;
    }
    let history = pick(args.history, &cfg, "history")?
        .unwrap_or_else(|| PathBuf::from("adapt_history.csv"));

    let inference = infer_preference(&model, &mut env, &hidden, &config)?;

    let mut text = GenerationRecord::csv_header(m);
    text.push('\n');
    for (generation, record) in inference.history.iter().enumerate() {
        text.push_str(&record.to_csv(generation));
        text.push('\n');
    }
    write_text_atomic(&history, &text)?;

    let mu = inference
        .mu
        .weights()
        .iter()
        .map(|w| format!("{w:.6}"))
        .collect::<Vec<_>>()
        .join(",");
    println!("inferred_mu={mu} argmax={}", inference.mu.argmax());
    println!("wrote search history to {}", history.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Run config file (`key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_oracle(args: OracleArgs) -> Result<()> {
    let cfg = KvConfig::load(args.config.as_deref())?;
    cfg.check_known(&ENV_KEYS)?;
    let env = resolve_env(&args.env, &cfg)?;
    let (points, ccs) = benchmark_ccs(&env)?;
    let m = points.objective_count();

    let mut text = String::new();
    for k in 0..m {
        text.push_str(&format!("r{k},"));
    }
    text.push_str("in_ccs\n");
    for (i, point) in points.points().iter().enumerate() {
        for x in point {
            text.push_str(&format!("{x},"));
        }
        text.push_str(if ccs.contains_index(i) { "1\n" } else { "0\n" });
    }
    emit_csv(args.out.as_deref(), &text, "oracle frontier")
}

#[derive(Debug, Args)]
pub struct TabularArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Run config file (`key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preference grid size (default 201 for two objectives, else 512).
    #[arg(long)]
    grid_size: Option<usize>,
    /// Value-iteration stopping tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

const TABULAR_KEYS: [&str; 6] = ["env", "depth", "env_seed", "gamma", "grid_size", "tolerance"];

fn run_tabular(args: TabularArgs) -> Result<()> {
    let cfg = KvConfig::load(args.config.as_deref())?;
    cfg.check_known(&TABULAR_KEYS)?;
    let mut env = resolve_env(&args.env, &cfg)?;
    let (mdp, coords) = match &env {
        Benchmark::Dst(e) => dst_momdp::<ExactScalar>(e.map())?,
        Benchmark::Ftn(e) => ftn_momdp::<ExactScalar>(e.tree())?,
    };
    let m = mdp.objective_count();
    let size = pick(args.grid_size, &cfg, "grid_size")?.unwrap_or(if m == 2 {
        DEFAULT_GRID_SIZE_LINE
    } else {
        DEFAULT_GRID_SIZE_SIMPLEX
    });
    let tolerance =
        pick(args.tolerance, &cfg, "tolerance")?.unwrap_or(DEFAULT_VI_TOLERANCE);

    let grid = preference_grid::<ExactScalar>(m, size)?;
    let q = envelope_value_iteration(&mdp, &grid, tolerance)?;
    let policy = greedy_policy(&q);
    let returns = greedy_rollout_returns(&mut env, &policy, &coords)?;

    // Identical policies solve to bitwise-identical returns, so exact
    // deduplication collapses each winning region to one frontier point.
    let mut frontier: Vec<Vec<f64>> = Vec::new();
    for ret in returns {
        if !frontier.contains(&ret) {
            frontier.push(ret);
        }
    }

    let mut text = String::new();
    for k in 0..m {
        text.push_str(&format!("r{k}"));
        text.push(if k + 1 == m { '\n' } else { ',' });
    }
    for point in &frontier {
        for (k, x) in point.iter().enumerate() {
            text.push_str(&format!("{x}"));
            text.push(if k + 1 == m { '\n' } else { ',' });
        }
    }
    emit_csv(args.out.as_deref(), &text, "planned frontier")
}
