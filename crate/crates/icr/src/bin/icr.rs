use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use icr::commands::{self, Method};
use icr::config::{resolve_threads, ExperimentConfig};

#[derive(Parser)]
#[command(name = "icr", version, about = "Iterative charted refinement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file, or directory for `compare`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Method::Icr)]
    method: Method,

    /// Worker threads (falls back to ICR_THREADS, then bench.threads)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also write the ICR refinement matrices of the configured model to this CSV
    #[arg(long, global = true, value_name = "PATH")]
    dump_matrices: Option<PathBuf>,

    /// Config override, e.g. --set spec.n_lvl=5 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw realizations and write index, coordinates and values as CSV
    Sample,
    /// Write the approximate covariance matrix as CSV
    Covariance,
    /// Compare an approximate covariance with the exact one
    Compare,
    /// Pick the refinement shape with the smallest KL divergence
    SelectParams,
    /// Time forward passes over bench.sizes
    Bench,
    /// Print the effective configuration
    ShowConfig,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    let threads = resolve_threads(cli.threads, &cfg);
    let out = |default: &str| cfg.output.clone().unwrap_or_else(|| PathBuf::from(default));
    let method = cli.method;
    if let Some(path) = &cli.dump_matrices {
        commands::dump_matrices(&commands::build_model(&cfg)?, path)?;
    }

    match cli.command {
        Command::Sample => {
            commands::sample(&cfg, threads, &out("samples.csv"))?;
        }
        Command::Covariance => {
            commands::covariance(&cfg, method, &out(&format!("cov_{method}.csv")))?;
        }
        Command::Compare => {
            let r = commands::compare(&cfg, method, &out("."))?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::SelectParams => {
            let r = commands::select_params(&cfg, &out("select.json"))?;
            println!("winner: ({}, {})", r.winner.0, r.winner.1);
        }
        Command::Bench => {
            for row in commands::bench(&cfg, method, threads, &out(&format!("bench_{method}.csv")))? {
                println!("{} n={} median_ms={:?}", row.method, row.n, row.median_ms);
            }
        }
        Command::ShowConfig => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
