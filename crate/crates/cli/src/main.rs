use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdlevy_cli::{load_config, run_and_write};

/// Verification experiments for selfdecomposable laws and their stopping-time
/// factorizations.
#[derive(Parser)]
#[command(name = "sdlevy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write samples.csv, report.json, cdf.csv, ecf.csv.
    Run {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the configuration.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, seed, out_dir } = Cli::parse().command;
    let cfg = match load_config(&config, seed, out_dir) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    match run_and_write(&cfg) {
        Ok((outcome, paths)) => {
            for r in &outcome.reports {
                let verdict = if r.passed() { "pass" } else { "FAIL" };
                match r.ks {
                    Some(ks) => println!("{verdict}  {}  D={:.5} threshold={:.5}", r.name, ks.statistic, ks.threshold),
                    None => println!("{verdict}  {}", r.name),
                }
                for c in r.checks.iter().filter(|c| !c.pass) {
                    println!("      failed check: {} = {} (target {})", c.label, c.value, c.target);
                }
            }
            for p in &paths {
                println!("wrote {}", p.display());
            }
            println!("fingerprint {}  seed {}", outcome.fingerprint, cfg.seed);
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
