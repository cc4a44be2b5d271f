use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bfcal_cli::{cmd_analyze, cmd_run, cmd_simulate, cmd_validate, AnalyzeOptions, RunOptions};

#[derive(Parser)]
#[command(name = "bfcal", version, about = "Simulation-based calibration of Bayes factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) an SBC batch.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (overrides BFCAL_THREADS).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        resume: bool,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write posterior draws of every fit as CSV.
        #[arg(long)]
        dump_draws: bool,
    },
    /// Summaries, sensitivity curves and reliability diagrams for a records file.
    Analyze {
        records: PathBuf,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
        /// Prefix step for the evidence-vs-n curve.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
    },
    /// Run the analytic-oracle checks.
    Validate {
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_logml_offset: f64,
    },
    /// Write the simulated datasets of a batch without fitting.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "datasets")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, jobs, resume, seed, dump_draws } => {
            cmd_run(&config, &out, &RunOptions { jobs, resume, seed, dump_draws }).map(|r| {
                println!("{} records: {} ok, {} failed, {} with bridge warnings", r.total, r.ok, r.failed, r.warned);
            })
        }
        Command::Analyze { records, out, stride, resamples } => {
            cmd_analyze(&records, &out, &AnalyzeOptions { stride, n_resample: resamples, ..AnalyzeOptions::default() })
                .map(|files| println!("wrote {} files to {}", files.len(), out.display()))
        }
        Command::Validate { inject_logml_offset } => cmd_validate(inject_logml_offset).map(|_| ()),
        Command::Simulate { config, out, seed } => {
            cmd_simulate(&config, &out, seed).map(|n| println!("wrote {n} datasets to {}", out.display()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
