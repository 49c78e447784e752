use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sagin_core::harness::{self, ExperimentConfig, ExperimentPlan};
use sagin_core::orchestrator::{PlannerChoice, PlannerMode};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sagin", version, about = "SAGIN reward-shaping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or evaluate) the selected methods and write convergence.csv and summary.csv.
    Run {
        /// TOML file with [scenario], [intent], [shaping], [thresholds] and [agent] sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated method names; defaults to all five.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Load frozen agents from this directory instead of training.
        #[arg(long)]
        eval_from: Option<PathBuf>,
        /// Also write per-step and per-phase traces under <out>/trace.
        #[arg(long)]
        trace: bool,
    },
    /// Rank methods by latency and report the shaped-vs-fixed energy change.
    Compare {
        #[arg(long)]
        summary: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            methods,
            episodes,
            seeds,
            out,
            eval_from,
            trace,
        } => {
            let mut plan = ExperimentPlan::new(out);
            if let Some(path) = config {
                plan.config = ExperimentConfig::load(&path)?;
            }
            if let Some(names) = methods {
                plan.methods = names
                    .iter()
                    .map(|n| n.parse::<PlannerChoice>())
                    .collect::<Result<_, _>>()?;
            }
            plan.episodes = episodes;
            plan.seeds = seeds;
            plan.trace = trace;
            if let Some(dir) = eval_from {
                plan.mode = PlannerMode::Evaluate { artifacts: dir };
            }
            let report = harness::run(&plan)?;
            println!("wrote {}", report.convergence_csv.display());
            println!("wrote {}", report.summary_csv.display());
            for r in &report.summary {
                println!(
                    "{:<15} latency {:>10.3} ms  energy {:.6}",
                    r.method, r.mean_latency_ms, r.mean_uav_energy_norm
                );
            }
        }
        Command::Compare { summary } => {
            let rows = harness::read_summary(&summary).with_context(|| format!("reading {}", summary.display()))?;
            let c = harness::compare(&rows)?;
            print!("{}", harness::render_comparison(&c));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
