use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;

use lzs_sim::{run_file, Overrides};

/// Landau-Zener-Stückelberg interferometry simulator.
///
/// Exit codes: 0 ok, 2 config parse error, 3 invalid value, 4 numerical
/// failure, 5 I/O error.
#[derive(Debug, Parser)]
#[command(name = "lzs-sim", version)]
struct Args {
    /// Run configuration (`key = value` lines under `[section]` headers).
    config: PathBuf,
    /// Master seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; overrides `output.path`. The sidecar goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut logger =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if args.quiet {
        logger.filter_level(LevelFilter::Error);
    }
    logger.init();

    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
        threads: args.threads,
    };
    match run_file(&args.config, &overrides) {
        Ok(outcome) => {
            if !args.quiet {
                println!(
                    "{} rows -> {} (sidecar {})",
                    outcome.result.rows().len(),
                    outcome.csv.display(),
                    outcome.sidecar.display()
                );
                for (k, v) in &outcome.result.summary {
                    println!("  {k} = {v}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lzs-sim: {}: {e}", args.config.display());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
