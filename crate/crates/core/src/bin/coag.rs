use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coag_core::experiments::{self, ExperimentConfig, Scenario};

#[derive(Parser)]
#[command(name = "coag", version, about = "Scenario runner for the diagonal coagulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, print its verdicts, exit 0 iff all pass.
    Run {
        #[arg(value_enum)]
        scenario: Scenario,
        /// JSON config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to out/<scenario>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the homogeneity exponent from the config.
        #[arg(long)]
        gamma: Option<f64>,
        /// Override the time horizon from the config.
        #[arg(long)]
        horizon: Option<f64>,
        /// Override the fibre count from the config.
        #[arg(long)]
        fibres: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            config,
            out,
            gamma,
            horizon,
            fibres,
        } => {
            let mut cfg = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(g) = gamma {
                cfg.gamma = g;
            }
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
            if let Some(q) = fibres {
                cfg.fibres = q;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(scenario.name()));
            match experiments::run(scenario, &cfg, &out_dir) {
                Ok(report) => {
                    for v in &report.verdicts {
                        println!("{}", v.line());
                    }
                    println!(
                        "{}: {} ({} verdicts, artifacts in {})",
                        report.scenario,
                        if report.passed { "PASS" } else { "FAIL" },
                        report.verdicts.len(),
                        out_dir.display()
                    );
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
