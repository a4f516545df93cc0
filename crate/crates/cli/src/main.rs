use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mitet_cli::commands::{self, ReportArgs, SweepArgs, TheoremArgs, TrainArgs};
use mitet_cli::UsageError;

#[derive(Parser)]
#[command(
    name = "mitet",
    version,
    about = "Softmax-PQC policy-gradient experiments and bound audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on CartPole and write the run log, checkpoint, summary and charts.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the circuit depth.
        #[arg(long)]
        layers: Option<usize>,
        /// Override the reward-signal bin count.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// MI proxy of one batch at several bin counts.
    BinSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated bin counts.
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,50")]
        bins: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Exact audits of the gradient and expressivity bounds. Exits 1 on any violation.
    Theorems {
        #[arg(long)]
        out: PathBuf,
        /// Suite size; 1000 is the full audit.
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tabular MDP file to audit under a uniform policy.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bin count for the supplied MDP.
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Charts and correlation tables for one or more run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Shade bounds with fitted constants instead of the theorem form.
        #[arg(long)]
        scaled: bool,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            layers,
            bins,
        } => {
            let summary = commands::train(&TrainArgs {
                config,
                out: out.clone(),
                seed,
                layers,
                bins,
            })?;
            println!(
                "{} batches, final moving average {:.1}{}; wrote {}",
                summary.batches,
                summary.final_moving_avg_reward,
                if summary.early_stopped {
                    " (early stop)"
                } else {
                    ""
                },
                out.display()
            );
        }
        Command::BinSweep {
            config,
            out,
            bins,
            seed,
            layers,
        } => {
            let report = commands::bin_sweep(&SweepArgs {
                config,
                out,
                bins,
                seed,
                layers,
            })?;
            println!("{:>6}  {:>10}", "bins", "MI");
            for p in &report.points {
                println!("{:>6}  {:>10.6}", p.bins, p.mi_tet_proxy);
            }
        }
        Command::Theorems {
            out,
            instances,
            seed,
            config,
            bins,
        } => {
            let outcome = commands::theorems(&TheoremArgs {
                out,
                instances,
                seed,
                mdp: config,
                bins,
            })?;
            let s = &outcome.suite;
            println!(
                "one-shot {} (+{} circuit), mdp {}, baseline {}, expressivity {}, proxy {}, pinsker pairs {}",
                s.one_shot.len(),
                s.pqc_one_shot.len(),
                s.mdp.len(),
                s.baseline.len(),
                s.expressivity.len(),
                s.proxy_gap.len(),
                s.pinsker.pairs
            );
            println!("max gradient disagreement {:.3e}", s.max_gradient_disagreement);
            println!("violations {}", outcome.violations);
            if outcome.violations > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { runs, out, scaled } => {
            let outcome = commands::report(&ReportArgs { runs, out, scaled })?;
            for run in &outcome.runs {
                match run.mi_entropy_correlation {
                    Some(r) => println!("{}: Pearson(MI, entropy) = {r:.3}", run.label),
                    None => println!("{}: Pearson(MI, entropy) undefined", run.label),
                }
            }
            for failure in &outcome.failures {
                eprintln!("warning: {failure}");
            }
            if outcome.runs.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
