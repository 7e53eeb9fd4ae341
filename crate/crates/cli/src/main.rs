use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfpg_cli::commands;
use mfpg_cli::config::{parse_seed_list, preset, ExperimentConfig};
use mfpg_cli::{CliError, Result};

/// Model-free policy optimization experiments on stochastic LQR.
#[derive(Debug, Parser)]
#[command(name = "mfpg", version)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in configuration: "paper" (natural gradient) or "paper-gnm" (Gauss-Newton).
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "config")]
    preset: Option<String>,

    /// Seeds overriding the config, e.g. "0..30" or "1,4,9".
    #[arg(long, global = true, value_name = "LIST")]
    seed_list: Option<String>,

    /// Output directory overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the optimal gain, Riccati solution and optimal cost.
    Riccati,
    /// Write one dataset per seed to the output directory.
    Collect,
    /// Run every estimator on every seed and write result tables.
    Run,
    /// Render an aggregate table (or a run directory) to SVG.
    Plot {
        /// `aggregate.csv` or the directory holding it.
        input: PathBuf,
    },
    /// Print bound constants and theoretical sample and iteration bounds.
    Constants,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(CliError::Config("pass --config PATH or --preset paper".into())),
    };
    if let Some(list) = &cli.seed_list {
        cfg.data.seeds = parse_seed_list(list)?;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::Plot { input } = &cli.command {
        let path = commands::plot(input, cli.out.as_deref())?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let cfg = load_config(cli)?;
    let exp = cfg.resolve()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Riccati => commands::riccati(&exp, &mut out),
        Command::Constants => commands::constants(&cfg, &exp, &mut out),
        Command::Collect => {
            let paths = commands::collect(&cfg, &exp, &cfg.output.dir)?;
            let _ = writeln!(out, "wrote {} datasets to {}", paths.len(), cfg.output.dir.display());
            Ok(())
        }
        Command::Run => {
            let summary = commands::run(&cfg, &exp, &cfg.output.dir)?;
            let _ = writeln!(
                out,
                "wrote {} trials to {}",
                summary.trials.len(),
                cfg.output.dir.display()
            );
            if summary.incomplete > 0 {
                return Err(CliError::Numerical(format!(
                    "{} of {} trials stopped early (see the status column of trials.csv)",
                    summary.incomplete,
                    summary.trials.len()
                )));
            }
            Ok(())
        }
        Command::Plot { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
