use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use purcell_lab::scenario::{run_to_dir, Scenario, Study};

#[derive(Parser)]
#[command(name = "purcell-lab", version, about = "Scenario runner for driven emitter-cavity simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write <study>.csv plus manifest.json
    Run {
        scenario: PathBuf,
        /// Output directory; overrides the scenario's output.directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweeps (0 = one per core)
        #[arg(long, env = "PURCELL_LAB_WORKERS", default_value_t = 0)]
        workers: usize,
        /// Accepted for compatibility; every study is deterministic
        #[arg(long)]
        seedless: bool,
    },
    /// Parse and validate a scenario without running it
    Validate { scenario: PathBuf },
    /// List the available studies
    ListStudies,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListStudies => {
            for s in Study::ALL {
                println!("{:<20} {}", s.name(), s.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match Scenario::load(&scenario) {
            Ok(sc) => {
                println!("ok: {} scenario", sc.study.name());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(e.exit_code())
            }
        },
        Command::Run { scenario, out, workers, seedless: _ } => {
            let result = Scenario::load(&scenario).and_then(|sc| {
                let dir = out.unwrap_or_else(|| sc.output.directory.clone());
                run_to_dir(&sc, &dir, workers)
            });
            match result {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
    }
}
