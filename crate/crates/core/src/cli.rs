//! The `fedrank` command line: run, compare, calibrate, synth-traj and
//! verify-theorem. Exit codes: 0 success, 2 invalid input, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{resolve_config, validate_scenario, TrajectorySource, ValidatedScenario};
use crate::domain::Rank;
use crate::engine::{run_comparative, run_with_seed, task_regrets, Policy, RunResult, RunSummary};
use crate::error::{Error, Result};
use crate::metrics::{scaling_check, scaling_experiment, ScalingReport, SynthPolicy, SynthTuning};
use crate::mobility::{synth_trajectories, write_tdrive, RsuZone, SynthParams};
use crate::surrogate::{fit_curve, load_anchors, AccuracyCurve, CurveFit};

/// 2008-02-02 00:00:00 UTC, the first day of the T-Drive sample week.
pub const TDRIVE_EPOCH: i64 = 1_201_910_400;

const CONFIG_KEYS: &str = "\
CONFIG KEYS (TOML; override any of them with --set dotted.key=value,
array elements by index, e.g. --set vehicles.0.cpu_freq=2e9):
  scenario.rounds            rounds M
  scenario.ranks             candidate ranks, strictly ascending
  scenario.seed              run seed (--seed wins)
  scenario.idle_round_s      clock advance of an empty task round, s
  weights.alpha|gamma|beta   latency, accuracy and energy weights
  bandit.epsilon             exploration factor (reward units)
  bandit.omega_c             dual step constant, step = omega_c / sqrt(M)
  budget.e_total             global per-round energy budget, J
  budget.q_period            reallocation period Q
  budget.xi|zeta             difficulty smoothing and amplification
  budget.perf_floor|h_init   performance floor, initial difficulty
  budget.reserve             energy held back from the initial split, J
  channel.bandwidth_hz|noise_power_w|gain_median|gain_sigma
  model.adapter_d|adapter_k|precision_bits   payload shape
  model.matrix_d|matrix_k|delta_scale|local_noise   simulated update
  mobility.source.kind       synthetic | tdrive
  mobility.source.seed|count|params.*        synthetic paths
  mobility.source.path       T-Drive file or directory
  mobility.departure_horizon_s|prediction_flip_prob|time_origin
  mobility.bbox.min_lon|max_lon|min_lat|max_lat
  metrics.oracle_limit       largest agents x arms for hindsight replays
  rsus[].name|lon|lat|radius_m|c_agg|cpu_freq|kappa|tx_power_w
  tasks[].name|rsu|curve|q_threshold   curve: seq|token|choice|{table}
  vehicles[].name|task|trajectory|c_per_sample|dataset_size|cpu_freq|kappa|tx_power_w";

#[derive(Debug, Parser)]
#[command(name = "fedrank", version, about = "Energy-constrained LoRA rank scheduling simulator")]
#[command(after_long_help = CONFIG_KEYS)]
pub struct Cli {
    /// Scenario: `default`, a path, or a name under $FEDRANK_CONFIG_DIR.
    #[arg(long, global = true, default_value = "default")]
    pub config: String,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Config override `dotted.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario under UCB-DUAL (or --policy).
    Run {
        #[arg(long, default_value = "ucb_dual")]
        policy: String,
    },
    /// Run several policies on the same scenario and seeds.
    Compare(CompareArgs),
    /// Fit an accuracy curve to (rank, accuracy) anchors.
    Calibrate {
        /// CSV of rank,accuracy rows; defaults to the built-in three-point anchors.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long, default_value_t = AccuracyCurve::SEQ.noise_sigma)]
        noise_sigma: f64,
        #[arg(long, default_value_t = AccuracyCurve::SEQ.progress_rate)]
        progress_rate: f64,
    },
    /// Write synthetic trajectories in T-Drive format.
    SynthTraj {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        traj_seed: Option<u64>,
    },
    /// Empirical regret and violation scaling on the synthetic bandit instance.
    VerifyTheorem(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Comma-separated policies; `fixed_all` expands to every candidate rank.
    #[arg(long, default_value = "ucb_dual,fixed_all,random_rank")]
    pub policies: String,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u32,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "1024,4096,16384")]
    pub horizons: Vec<u32>,
    #[arg(long, default_value_t = 5)]
    pub seeds: u32,
    #[arg(long, default_value_t = SynthTuning::default().omega_c)]
    pub omega_c: f64,
    #[arg(long, default_value_t = SynthTuning::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 2.0)]
    pub band: f64,
}

fn require_seed(cli: &Cli) -> Result<u64> {
    cli.seed
        .ok_or_else(|| Error::InvalidArgument("--seed is required for this command".into()))
}

fn out_dir(cli: &Cli, fallback: &str) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(fallback));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn scenario(cli: &Cli) -> Result<ValidatedScenario> {
    validate_scenario(resolve_config(&cli.config, &cli.overrides)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes config echo, per-round CSV, decisions, budget trace, regret series
/// and summary of one run into `dir`.
pub fn write_run(scenario: &ValidatedScenario, result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), scenario.to_toml()?)?;
    result.write_rounds_csv(scenario, fs::File::create(dir.join("rounds.csv"))?)?;
    result.write_decisions_csv(scenario, fs::File::create(dir.join("decisions.csv"))?)?;
    result.write_budget_csv(fs::File::create(dir.join("budget.csv"))?)?;
    match task_regrets(scenario, result) {
        Ok(series) => {
            let mut w = csv::Writer::from_path(dir.join("regret.csv"))?;
            for (task, s) in scenario.tasks.iter().zip(&series) {
                for p in &s.points {
                    w.serialize((
                        task.name.as_str(),
                        p.round,
                        p.instant,
                        p.cumulative,
                        p.violation,
                        p.cumulative_violation,
                    ))?;
                }
            }
            w.flush()?;
        }
        Err(Error::OracleLimit { .. }) => log::warn!("regret series skipped: oracle limit exceeded"),
        Err(e) => return Err(e),
    }
    write_json(&dir.join("summary.json"), &result.summary)
}

fn dir_name(policy: &Policy) -> String {
    policy
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}

/// Parses a comma-separated policy list; `fixed_all` expands to one fixed
/// policy per candidate rank.
pub fn parse_policies(list: &str, ranks: &[Rank]) -> Result<Vec<Policy>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "fixed_all" {
            out.extend(ranks.iter().map(|&r| Policy::FixedRank(r)));
        } else {
            out.push(item.parse()?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no policies given".into()));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CompareRow<'a> {
    policy: &'a str,
    seed: u64,
    reward: f64,
    task_reward: f64,
    avg_accuracy: f64,
    latency_s: f64,
    energy_j: f64,
    violation_j: f64,
}

fn compare(cli: &Cli, args: &CompareArgs) -> Result<Vec<RunSummary>> {
    let seed = require_seed(cli)?;
    let scenario = scenario(cli)?;
    let policies = parse_policies(&args.policies, scenario.ranks.as_slice())?;
    let dir = out_dir(cli, "fedrank-compare")?;
    let mut summaries = Vec::new();
    for s in 0..args.seeds.max(1) {
        let seed = seed + s as u64;
        for result in run_comparative(&scenario, &policies, seed)? {
            write_run(&scenario.with_seed(seed), &result, &dir.join(dir_name(&result.policy)).join(format!("seed-{seed}")))?;
            summaries.push(result.summary);
        }
    }
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for s in &summaries {
        w.serialize(CompareRow {
            policy: &s.policy,
            seed: s.seed,
            reward: s.cumulative_reward,
            task_reward: s.cumulative_task_reward,
            avg_accuracy: s.mean_accuracy,
            latency_s: s.mean_latency,
            energy_j: s.total_energy,
            violation_j: s.violation,
        })?;
    }
    w.flush()?;
    Ok(summaries)
}

/// Three measured (rank, accuracy) points used for the default curve.
pub fn table_anchors() -> Vec<(Rank, f64)> {
    [(1, 0.73329), (8, 0.81443), (200, 0.83069)]
        .into_iter()
        .map(|(r, q)| (Rank::new(r).expect("positive"), q))
        .collect()
}

#[derive(Debug, Serialize)]
struct Calibration {
    fit: CurveFit,
    curve: AccuracyCurve,
}

#[derive(Debug, Serialize)]
pub struct TheoremReport {
    pub horizons: Vec<u32>,
    pub seeds: u32,
    pub omega_c: f64,
    pub epsilon: f64,
    pub ucb_dual: ScalingReport,
    pub always_worst: ScalingReport,
    /// Rewards of the synthetic instance lie in this interval.
    pub reward_bounds: (f64, f64),
    pub passed: bool,
}

/// Runs the scaling experiment for UCB-DUAL and the always-worst control.
pub fn verify_theorem(horizons: &[u32], seeds: u32, base_seed: u64, tuning: SynthTuning, band: f64) -> Result<TheoremReport> {
    let ucb = scaling_check(&scaling_experiment(SynthPolicy::UcbDual, horizons, seeds, base_seed, tuning)?, band)?;
    let worst = scaling_check(&scaling_experiment(SynthPolicy::AlwaysWorst, horizons, seeds, base_seed, tuning)?, band)?;
    let passed = ucb.passed() && ucb.violation_rate_decreasing && !worst.regret_bounded;
    Ok(TheoremReport {
        horizons: horizons.to_vec(),
        seeds,
        omega_c: tuning.omega_c,
        epsilon: tuning.epsilon,
        ucb_dual: ucb,
        always_worst: worst,
        reward_bounds: (0.0, 1.0),
        passed,
    })
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidArgument("--jobs must be ≥ 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match &cli.command {
        Command::Run { policy } => {
            let seed = require_seed(cli)?;
            let scenario = scenario(cli)?.with_seed(seed);
            let result = run_with_seed(&scenario, &policy.parse()?, seed)?;
            let dir = out_dir(cli, "fedrank-run")?;
            write_run(&scenario, &result, &dir)?;
            println!("{}", serde_json::to_string(&result.summary)?);
        }
        Command::Compare(args) => {
            for s in compare(cli, args)? {
                println!(
                    "{:<16} seed {:<4} reward {:>12.3} accuracy {:.4} latency {:>9.3}s energy {:>10.2}J",
                    s.policy, s.seed, s.cumulative_reward, s.mean_accuracy, s.mean_latency, s.total_energy
                );
            }
        }
        Command::Calibrate { anchors, noise_sigma, progress_rate } => {
            let points = match anchors {
                Some(path) => load_anchors(path).map_err(|e| match e {
                    Error::Parse(_) | Error::InvalidArgument(_) => e,
                    other => Error::InvalidArgument(format!("cannot read anchors {}: {other}", path.display())),
                })?,
                None => table_anchors(),
            };
            let fit = fit_curve(&points)?;
            let curve = fit.curve(*noise_sigma, *progress_rate);
            curve.validate().map_err(Error::InvalidArgument)?;
            let report = Calibration { fit, curve };
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                write_json(&dir.join("curve.json"), &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::SynthTraj { count, traj_seed } => {
            let scenario = scenario(cli)?;
            let (cfg_seed, cfg_count, params) = match &scenario.config().mobility.source {
                TrajectorySource::Synthetic { seed, count, params } => (*seed, *count, *params),
                TrajectorySource::Tdrive { .. } => (0, scenario.vehicles.len(), SynthParams::default()),
            };
            let zones: Vec<RsuZone> = scenario.rsus.iter().map(|r| r.zone).collect();
            let trajs = synth_trajectories(count.unwrap_or(cfg_count), &zones, traj_seed.or(cli.seed).unwrap_or(cfg_seed), &params);
            let dir = out_dir(cli, "fedrank-traj")?;
            write_tdrive(&trajs, &dir, TDRIVE_EPOCH)?;
            println!("wrote {} trajectories to {}", trajs.len(), dir.display());
        }
        Command::VerifyTheorem(args) => {
            let seed = require_seed(cli)?;
            if args.horizons.is_empty() || args.seeds == 0 {
                return Err(Error::InvalidArgument("need horizons and at least one seed".into()));
            }
            let tuning = SynthTuning { omega_c: args.omega_c, epsilon: args.epsilon };
            if !(tuning.omega_c > 0.0 && tuning.epsilon >= 0.0 && args.band >= 1.0) {
                return Err(Error::InvalidArgument("omega_c > 0, epsilon ≥ 0 and band ≥ 1 required".into()));
            }
            let report = verify_theorem(&args.horizons, args.seeds, seed, tuning, args.band)?;
            let dir = out_dir(cli, "fedrank-theorem")?;
            write_json(&dir.join("scaling.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InRound { source, .. } => error_kind(source),
        Error::Validation { .. } => "validation",
        Error::Parse(_) => "parse",
        Error::InvalidArgument(_) => "argument",
        Error::Io(_) => "io",
        _ => "runtime",
    }
}

/// Parses `args`, runs the command and maps failures to an exit code with a
/// one-line `error[kind]: message` on stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {line}", error_kind(&e));
            if e.is_input_error() {
                2
            } else {
                3
            }
        }
    }
}
