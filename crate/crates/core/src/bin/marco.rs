use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use marco::harness::cli::{self, CliError, RunOptions};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "marco",
    version,
    about = "Multi-agent code reasoning benchmark runner"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark and write a results directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue an interrupted run in `--out`.
        #[arg(long)]
        resume: bool,
        /// No knowledge, no lesson exchange.
        #[arg(long)]
        static_mode: bool,
    },
    /// Recompute metrics for a results directory.
    Score {
        #[arg(long)]
        results: PathBuf,
    },
    /// Per-half accuracy deltas of run A over run B.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Print a synthetic DSL induction dataset as JSONL.
    GenDsl {
        #[arg(long)]
        family: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the condensation history of a run.
    InspectKnowledge {
        #[arg(long)]
        results: PathBuf,
    },
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Run {
            config,
            dataset,
            out,
            resume,
            static_mode,
        } => cli::run(&RunOptions {
            config,
            dataset,
            out,
            resume,
            static_mode,
        })
        .map(|m| json(&m)),
        Command::Score { results } => cli::score(&results).map(|m| json(&m)),
        Command::Compare { a, b } => cli::compare(&a, &b).map(|h| json(&h)),
        Command::GenDsl {
            family,
            count,
            seed,
        } => {
            let family = cli::parse_family(&family)?;
            Ok(cli::gen_dsl(family, count, seed).trim_end().to_string())
        }
        Command::InspectKnowledge { results } => {
            cli::inspect_knowledge(&results).map(|s| s.trim_end().to_string())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("MARCO_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Args::parse().command) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
