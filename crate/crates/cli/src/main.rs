use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use emarl_cli::bench::{bench_memory, render, BenchConfig};
use emarl_cli::config::{ExperimentConfig, OUT_DIR_ENV};
use emarl_cli::run::{self, SweepParam};

#[derive(Parser)]
#[command(name = "emarl", version, about = "Cooperative multi-agent learners with episodic memory")]
struct Cli {
    /// Seed replicas trained concurrently (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write metrics, summary and plot.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One experiment per value of a hyper-parameter, plus an overlay plot.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// lambda, table_capacity, m_size or projection_dim.
        #[arg(long)]
        param: String,
        /// Comma-separated values; defaults to the reference grid.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table counts, flush touches, storage and flush time of SEM vs SAEM.
    BenchMemory {
        #[arg(long, default_value_t = 2)]
        agents: usize,
        #[arg(long, default_value_t = 5)]
        actions: usize,
        #[arg(long, default_value_t = 10)]
        flushes: usize,
        #[arg(long, default_value_t = 5000)]
        mset: usize,
        #[arg(long, default_value_t = 1000)]
        keys: usize,
        #[arg(long, default_value_t = 4)]
        key_dim: usize,
        #[arg(long, default_value_t = 1_000_000)]
        capacity: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and report mean y, E_s and E_su per evaluation point.
    CompareTargets {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the configured environment exactly and print the result.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn output_dir(flag: Option<PathBuf>, config: &ExperimentConfig, config_path: &Path) -> PathBuf {
    if let Some(p) = flag.or_else(|| config.output_dir.clone()) {
        return p;
    }
    let stem = config_path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    let root = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(stem)
}

fn execute(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or_else(run::default_jobs);
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(out, &cfg, &config);
            let artifact = run::run_experiment(&cfg, &dir, jobs)?;
            let last = artifact.summary.last().expect("at least one evaluation point");
            println!(
                "{} seeds -> {} (final median return {}, p25 {}, p75 {})",
                artifact.runs.len(),
                dir.display(),
                last.return_median,
                last.return_p25,
                last.return_p75
            );
        }
        Command::Sweep { config, param, values, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let param: SweepParam = param.parse()?;
            let values = match values {
                Some(v) => run::parse_values(&v)?,
                None => param.reference_grid().to_vec(),
            };
            let dir = output_dir(out, &cfg, &config).join(format!("sweep_{}", param.as_str()));
            for (value, artifact) in run::sweep(&cfg, param, &values, &dir, jobs)? {
                let last = artifact.summary.last().expect("at least one evaluation point");
                println!("{}={value}: final median return {}", param.as_str(), last.return_median);
            }
            println!("overlay: {}", dir.join(run::OVERLAY_FILE).display());
        }
        Command::BenchMemory { agents, actions, flushes, mset, keys, key_dim, capacity, seed } => {
            let report = bench_memory(&BenchConfig {
                n_agents: agents,
                n_actions: actions,
                flushes,
                mset,
                keys,
                key_dim,
                capacity,
                seed,
            })?;
            print!("{}", render(&report));
        }
        Command::CompareTargets { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(out, &cfg, &config).join("targets");
            let rows = run::compare_targets(&cfg, &dir, jobs)?;
            print!("{}", run::targets_csv(&rows));
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let env = cfg.trainer.env.build().context("cannot build environment")?;
            let result = env.oracle()?;
            println!("environment: {}", env.id());
            println!("optimal_discounted_return: {}", result.optimal_discounted_return);
            println!("expected_optimal_return: {}", result.expected_optimal_return);
            if let Some(policy) = result.optimal_joint_policy {
                for (state, action) in policy {
                    println!("start state {state}: optimal joint action {action:?}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
