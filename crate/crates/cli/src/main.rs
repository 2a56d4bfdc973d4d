//! `conelq` — run Riccati solves, frontiers, simulations and checks from a
//! JSON configuration.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "conelq", version, about)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the configuration's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    dump_effective_config: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.config.display())))?;
    let cfg = RunConfig::parse(&text)?.effective(args.seed);
    if args.dump_effective_config {
        println!("{}", cfg.to_json());
        return Ok(0);
    }
    let out = run::output_dir(&cfg, args.out.clone());
    let outcome = run::run(&cfg, &out)?;
    print!("{}", outcome.report);
    Ok(if outcome.passed { 0 } else { 1 })
}
