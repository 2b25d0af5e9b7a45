use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spsu_cli::{cmd_eval, cmd_generate, cmd_run, CliError, CliResult, RunConfig, Seeds};

#[derive(Parser)]
#[command(name = "spsu", version, about = "Spatial-spectral unmixing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed; files are read and written directly in the given directories.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed range `N..M` (end excluded) or `N..=M`; one `seed-N` subdirectory per seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// `key=value` assignment applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth.
    Generate(Common),
    /// Run an unmixing method on generated or converted data.
    Run {
        #[command(flatten)]
        common: Common,
        /// sp2u, nmf, nsp2u, cspu or vca-fcls.
        #[arg(long)]
        method: Option<String>,
        /// Directory holding cube.spsu and pan.spsu (or seed-N subdirectories).
        #[arg(long)]
        data: PathBuf,
    },
    /// Score results against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        result: PathBuf,
    },
}

fn settings(common: &Common, method: Option<&str>) -> CliResult<(RunConfig, Seeds)> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for assignment in &common.overrides {
        cfg.apply_override(assignment)?;
    }
    if let Some(m) = method {
        cfg.set("method", m)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let seeds = match &common.seeds {
        Some(range) => Seeds::parse_range(range)?,
        None => Seeds::Single(cfg.seed),
    };
    Ok((cfg, seeds))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(common) => {
            let (cfg, seeds) = settings(&common, None)?;
            for dir in cmd_generate(&cfg, &common.out, &seeds)? {
                log::info!("wrote scene to {}", dir.display());
            }
        }
        Command::Run {
            common,
            method,
            data,
        } => {
            let (cfg, seeds) = settings(&common, method.as_deref())?;
            let manifest = cmd_run(&cfg, &data, &common.out, &seeds)?;
            for row in &manifest.rows {
                println!(
                    "seed {}: {} iterations, converged {}, objective {:.6e}, RE {:.4e}",
                    row.seed, row.iterations, row.converged, row.final_objective, row.re
                );
            }
        }
        Command::Eval { truth, result } => {
            let rows = cmd_eval(&truth, &result)?;
            println!("seed,asam,re,rmse,time_s");
            for row in rows {
                println!(
                    "{},{:.6},{:.4e},{:.6},{}",
                    row.seed.map_or_else(String::new, |s| s.to_string()),
                    row.asam,
                    row.re,
                    row.rmse,
                    row.time.map_or_else(String::new, |t| format!("{t:.2}"))
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { kind, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(kind as u8)
        }
    }
}
