use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robinlab_cli::config::{ExperimentConfig, DEFAULT_TOML};
use robinlab_cli::{runners, validate};

/// Numerical laboratory for the annular Robin problem: forward solves,
/// flux and coefficient reconstruction from outer-boundary Cauchy data,
/// and empirical stability checks.
#[derive(Parser)]
#[command(name = "robinlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured boundary-value problem, with optional mesh
    /// refinement study.
    Forward {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recover the inner-boundary flux from Cauchy data.
    InvertFlux {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recover the inner-boundary Robin coefficient from Cauchy data.
    InvertRobin {
        #[arg(long)]
        config: PathBuf,
    },
    /// Singular value sweep, modulus-of-continuity fit, and the audit
    /// battery.
    Stability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance battery and write validation.csv.
    Validate {
        /// Report directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

// Exit codes: 1 config, 2 solver or i/o, 3 failed acceptance.
fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

type Failure = (u8, String);

fn load(path: &PathBuf) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| (1, e.to_string()))
}

fn run() -> Result<ExitCode, Failure> {
    let cli = Cli::parse();
    match cli.command {
        Command::Forward { config } => {
            let cfg = load(&config)?;
            let files = runners::run_forward(&cfg).map_err(|e| (2, e.to_string()))?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::InvertFlux { config } => {
            let cfg = load(&config)?;
            let files = runners::run_invert_flux(&cfg).map_err(|e| (2, e.to_string()))?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::InvertRobin { config } => {
            let cfg = load(&config)?;
            let files = runners::run_invert_robin(&cfg).map_err(|e| (2, e.to_string()))?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Stability { config } => {
            let cfg = load(&config)?;
            let (report, files) = runners::run_stability(&cfg).map_err(|e| (2, e.to_string()))?;
            for (name, ok) in report.verdicts() {
                println!("{name}: {}", if ok { "pass" } else { "fail" });
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate { out } => {
            let outcomes = validate::run_all(&out).map_err(|e| (2, e.to_string()))?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed = outcomes.iter().filter(|o| !o.pass).count();
            if failed > 0 {
                println!("{failed} of {} criteria failed", outcomes.len());
                return Ok(ExitCode::from(3));
            }
            println!("all {} criteria passed", outcomes.len());
        }
        Command::Defaults => {
            print!("{DEFAULT_TOML}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
