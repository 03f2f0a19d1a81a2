//! Scenario-driven command line for the Landau-Ginzburg laboratory.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "lglab")]
#[command(about = "numerical experiments on symplectic Landau-Ginzburg models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write report.json / summary.csv (+ base.svg).
    Run {
        scenario: PathBuf,

        /// Output directory (default: the scenario's stem + "_out").
        #[arg(long)]
        out: Option<PathBuf>,

        /// Seed for randomized sweeps (overrides the scenario's seed field).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the model catalogue.
    ListModels,
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let out_dir = out.unwrap_or_else(|| {
                let stem = scenario
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| "scenario".into());
                PathBuf::from(format!("{stem}_out"))
            });
            match lglab::scenario::run(&scenario, &out_dir, seed) {
                Ok(outcome) => {
                    for rec in &outcome.report.experiments {
                        println!(
                            "{:<10} {:<28} value={:<+14.6e} residual={:<10.3e} {}",
                            rec.experiment, rec.name, rec.value, rec.residual, rec.status
                        );
                    }
                    println!(
                        "{} passed, {} failed -> {}",
                        outcome.report.passed,
                        outcome.report.failed,
                        out_dir.display()
                    );
                    if outcome.all_passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e @ lglab::Error::Validation(_)) | Err(e @ lglab::Error::Json(_)) => {
                    eprintln!("validation error: {e}");
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::ListModels => {
            print!("{}", lglab::scenario::list_models());
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match lglab::scenario::load_scenario(&scenario) {
            Ok(s) => {
                println!(
                    "ok: model={}, {} lagrangians, {} isotopies, {} experiments",
                    s.model,
                    s.lagrangians.len(),
                    s.isotopies.len(),
                    s.experiments.len()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("validation error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
