//! Command-line front end. Four subcommands: `run` executes an experiment
//! and writes its logs, `partition` materializes just the data assignment,
//! `regret` drives the selection-bound verifier, and `report` compares
//! finished runs.
//!
//! Exit codes are a stable contract: 0 success, 1 runtime failure,
//! 2 invalid configuration or arguments.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use fedsel_core::config::ExperimentConfig;
use fedsel_core::data::{export_partition, partition_stats, PartitionStats};
use fedsel_core::engine::{build_partitioned_data, metrics_csv, Experiment};
use fedsel_core::regret::{bound_check, BanditEnv, RewardDist};
use fedsel_core::Error;

use report::RunManifest;

#[derive(Parser)]
#[command(name = "fedsel", version, about = "Federated client-selection simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write records.jsonl, metrics.csv, manifest.json
    Run(RunArgs),
    /// Build the client data partition and report its statistics
    Partition(PartitionArgs),
    /// Check the selection bound on a synthetic reward environment
    Regret(RegretArgs),
    /// Summarize finished runs into a comparison table
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (.toml or .json)
    #[arg(long, required_unless_present = "resume", conflicts_with = "resume")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed
    #[arg(long, conflicts_with = "resume")]
    seed: Option<u64>,
    /// Continue from a checkpoint written by --stop-after
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many rounds and write checkpoint.json instead of logs
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct PartitionArgs {
    /// Experiment config file (.toml or .json)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Print per-partition summary statistics
    #[arg(long)]
    stats: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistArg {
    Gaussian,
    Bernoulli,
}

#[derive(Args)]
struct RegretArgs {
    /// JSON file holding an array of arm means in [0,1]
    #[arg(long, required_unless_present = "gen_arms", conflicts_with = "gen_arms")]
    arms: Option<PathBuf>,
    /// Generate this many arms with means spread evenly from 0.9 down to 0.1
    #[arg(long)]
    gen_arms: Option<usize>,
    /// Selection rounds per replication
    #[arg(long)]
    rounds: usize,
    /// Independent replications to average over
    #[arg(long)]
    replications: usize,
    /// Arms selected per round
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Exploration strength multiplier
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reward noise model
    #[arg(long, value_enum, default_value_t = DistArg::Gaussian)]
    dist: DistArg,
    /// Reward standard deviation (gaussian only)
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Write the per-round CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run output directories to compare
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Write the Markdown table here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Partition(args) => cmd_partition(args),
        Cmd::Regret(args) => cmd_regret(args),
        Cmd::Report(args) => report::cmd_report(&args.dirs, args.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// FEDSEL_THREADS caps the worker pool; unset means one worker per core.
fn configure_threads() -> Result<(), Error> {
    let raw = match std::env::var("FEDSEL_THREADS") {
        Ok(raw) => raw,
        Err(_) => return Ok(()),
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Config(format!("FEDSEL_THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Logic(format!("thread pool setup failed: {e}")))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    // Any load failure is a configuration problem for exit-code purposes.
    ExperimentConfig::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String, Error> {
    let canonical = cfg.to_canonical_json()?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let started_at = now_rfc3339();
    let mut exp = match (&args.resume, &args.config) {
        (Some(ckpt), None) => {
            let text = fs::read_to_string(ckpt)?;
            Experiment::from_checkpoint_json(&text)?
        }
        (None, Some(path)) => {
            let mut cfg = load_config(path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            Experiment::new(&cfg)?
        }
        _ => unreachable!("clap enforces exactly one of --config/--resume"),
    };
    if !exp.excluded_clients().is_empty() {
        eprintln!(
            "warning: {} client(s) hold no data and are excluded from selection: {:?}",
            exp.excluded_clients().len(),
            exp.excluded_clients()
        );
    }
    fs::create_dir_all(&args.out)?;

    let total = exp.config().rounds;
    let target = args.stop_after.map_or(total, |s| s.min(total));
    while exp.rounds_done() < target {
        exp.step()?;
    }

    if !exp.is_finished() {
        let path = args.out.join("checkpoint.json");
        fs::write(&path, exp.to_checkpoint_json()?)?;
        println!(
            "stopped after {} of {total} rounds; checkpoint at {}",
            exp.rounds_done(),
            path.display()
        );
        return Ok(());
    }

    let mut jsonl = String::new();
    for record in exp.records() {
        jsonl.push_str(&serde_json::to_string(record)?);
        jsonl.push('\n');
    }
    fs::write(args.out.join("records.jsonl"), jsonl)?;

    let summary = exp.summary();
    fs::write(
        args.out.join("metrics.csv"),
        metrics_csv(exp.records(), summary.strategy, summary.seed),
    )?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(exp.config())?,
        strategy: summary.strategy.to_string(),
        seed: summary.seed,
        rounds: summary.rounds,
        started_at,
        finished_at: now_rfc3339(),
        outputs: vec![
            "records.jsonl".to_string(),
            "metrics.csv".to_string(),
            "manifest.json".to_string(),
        ],
        totals: summary.totals,
        partition_residual: summary.partition_residual,
        excluded_clients: summary.excluded_clients,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    fs::write(args.out.join("manifest.json"), manifest_json)?;

    println!(
        "run complete: {} strategy, {} rounds, final accuracy {:.4}, last-10 mean {:.4}",
        summary.strategy, summary.rounds, summary.final_accuracy, summary.last10_mean_accuracy
    );
    Ok(())
}

fn render_stats(stats: &PartitionStats) -> String {
    format!(
        "clients            {}\n\
         samples per client {:.2} ± {:.2} (min {}, max {})\n\
         labels per client  {:.2} ± {:.2}\n",
        stats.clients,
        stats.size_mean,
        stats.size_stdev,
        stats.min_size,
        stats.max_size,
        stats.labels_mean,
        stats.labels_stdev,
    )
}

fn cmd_partition(args: PartitionArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config)?;
    let (_, _, outcome) = build_partitioned_data(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("partition.txt");
    fs::write(&path, export_partition(&outcome.partition))?;
    if let Some(residual) = outcome.residual {
        println!("least-norm relative residual: {residual:.6}");
    }
    if args.stats {
        print!("{}", render_stats(&partition_stats(&outcome.partition)?));
    }
    println!("partition written to {}", path.display());
    Ok(())
}

fn cmd_regret(args: RegretArgs) -> Result<(), Error> {
    let env = match (&args.arms, args.gen_arms) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            let means: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let variances = vec![args.sigma * args.sigma; means.len()];
            BanditEnv::new(means, variances, dist_of(args.dist), args.k, args.seed)?
        }
        (None, Some(arms)) => {
            let mut env = BanditEnv::uniform_spread(arms, args.k, args.sigma, args.seed)?;
            env.dist = dist_of(args.dist);
            env
        }
        _ => unreachable!("clap enforces exactly one of --arms/--gen-arms"),
    };

    let report = bound_check(&env, args.rounds, args.replications, args.rho)?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!(
        "rounds {}, defined fraction {:.3}, satisfied fraction {:.3}",
        args.rounds, report.defined_fraction, report.satisfied_fraction
    );
    Ok(())
}

fn dist_of(arg: DistArg) -> RewardDist {
    match arg {
        DistArg::Gaussian => RewardDist::GaussianClipped,
        DistArg::Bernoulli => RewardDist::Bernoulli,
    }
}
