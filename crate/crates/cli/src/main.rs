use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tora_asd_cli::commands::{check_document, execute_run, render_check, render_run, Selection};
use tora_asd_cli::output::write_atomic;

#[derive(Parser)]
#[command(
    name = "tora-asd",
    version,
    about = "TORA tracking control by additive state decomposition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario: paper-1 or paper-2.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario and print the stability margins.
    Check {
        #[command(flatten)]
        source: Source,
        /// Leave +-j exosystem modes out of the internal model.
        #[arg(long)]
        allow_unit_frequency: bool,
        /// Also write the gate report as JSON.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Simulate the closed loop and write the trajectory and report.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "T")]
        duration: Option<f64>,
        #[arg(long, value_name = "H")]
        step: Option<f64>,
        /// Record every N-th step.
        #[arg(long, value_name = "N")]
        stride: Option<usize>,
        #[arg(long, value_name = "TOL")]
        settling_tolerance: Option<f64>,
        #[arg(long)]
        allow_unit_frequency: bool,
        #[arg(long, value_name = "PATH", default_value = "trajectory.csv")]
        out: PathBuf,
        #[arg(long, value_name = "PATH", default_value = "report.json")]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Check {
            source,
            allow_unit_frequency,
            report,
        } => {
            let sel = Selection {
                config: source.config,
                scenario: source.scenario,
                allow_unit_frequency,
                ..Default::default()
            };
            let (cfg, label) = sel.resolve()?;
            let doc = check_document(&cfg, &label);
            print!("{}", render_check(&doc));
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&doc)?;
                write_atomic(&path, |w| {
                    w.write_all(json.as_bytes())?;
                    w.write_all(b"\n")
                })?;
            }
            Ok(if doc.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Run {
            source,
            duration,
            step,
            stride,
            settling_tolerance,
            allow_unit_frequency,
            out,
            report,
        } => {
            let sel = Selection {
                config: source.config,
                scenario: source.scenario,
                duration,
                step,
                stride,
                settling_tolerance,
                allow_unit_frequency,
            };
            let (cfg, label) = sel.resolve()?;
            let gates = check_document(&cfg, &label);
            if !gates.passed {
                eprint!("{}", render_check(&gates));
                return Ok(ExitCode::from(1));
            }
            let doc = execute_run(&cfg, &label, &out, &report)?;
            print!("{}", render_run(&doc));
            println!("wrote {} and {}", out.display(), report.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
