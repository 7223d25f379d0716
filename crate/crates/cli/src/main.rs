//! `sclab`: run simulate / optimize / verify / metric experiments from a JSON config.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration error,
//! 3 verification failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use run::{Command, Failure, Outcome};

#[derive(Parser)]
#[command(name = "sclab", version, about = "Singular stochastic control experiments")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one experiment command.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `search.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(value_enum)]
        command: Command,
    },
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn configure_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var("SCL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("SCL_THREADS: expected a nonnegative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("SCL_THREADS: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Action::Run { config, out, seed, command } = cli.action;
    let fail_config = |e: ConfigError| {
        eprintln!("config error: {e}");
        ExitCode::from(EXIT_CONFIG)
    };
    if let Err(e) = configure_threads() {
        return fail_config(e);
    }
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail_config(e),
    };
    let problem = match cfg.build() {
        Ok(p) => p,
        Err(e) => return fail_config(e),
    };
    let Some(dir) = out.or_else(|| cfg.output.directory.clone()) else {
        return fail_config(ConfigError("output.directory: not set and no --out given".into()));
    };
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let seed = seed.unwrap_or(cfg.search.master_seed);
    match run::execute(command, &problem, &cfg, seed, &dir) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => {
            eprintln!("verification failed; see {}", dir.join("verify.json").display());
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Config(msg)) => fail_config(ConfigError(msg)),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
