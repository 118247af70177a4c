use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use covds::cli::{
    cmd_eval, cmd_extract, cmd_init, cmd_selftest, cmd_synth, init_worker_pool, Overrides,
};
use covds::config::Config;
use covds::error::Error;

/// Covariance descriptors for image sets on the SPD manifold.
#[derive(Parser)]
#[command(name = "covds", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a config file with full defaults.
    Init {
        /// Where to write the config.
        #[arg(long, default_value = "covds.json")]
        config: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Generate the configured synthetic dataset on disk.
    Synth {
        #[arg(long, default_value = "covds.json")]
        config: PathBuf,
        /// Output root (defaults to the config's dataset path).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Populate the descriptor cache for the configured dataset.
    Extract {
        #[arg(long, default_value = "covds.json")]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the benchmark protocol and write report files.
    Eval {
        #[arg(long, default_value = "covds.json")]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the embedded invariant suite.
    Selftest {
        /// Fixture seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> Result<Config, Error> {
    let mut config = Config::load(path)?;
    overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn run() -> Result<ExitCode, Error> {
    match Cli::parse().command {
        Command::Init { config, force } => {
            cmd_init(&config, force)?;
            println!("wrote {}", config.display());
        }
        Command::Synth {
            config,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let summary = cmd_synth(&config, out.as_deref())?;
            println!(
                "wrote {} sets ({} classes, {} images) under {}",
                summary.sets,
                summary.classes,
                summary.images,
                summary.root.display()
            );
        }
        Command::Extract { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            init_worker_pool(config.jobs);
            let summary = cmd_extract(&config)?;
            println!(
                "{} sets: {} artifacts computed, {} cache hits",
                summary.sets, summary.computed, summary.cache_hits
            );
        }
        Command::Eval { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            init_worker_pool(config.jobs);
            let output = cmd_eval(&config)?;
            print!("{}", output.report.to_text_table());
            println!("report: {}", output.json_path.display());
        }
        Command::Selftest { seed } => {
            let (results, all_passed) = cmd_selftest(seed);
            for r in &results {
                println!(
                    "{} {} ({})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            if !all_passed {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
