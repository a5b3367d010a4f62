//! Command-line front end. Every subcommand reads a TOML config (defaults
//! when absent); `--seed`, `--out` and `--chains` override the file.
//! `PROXPRIOR_THREADS` caps the worker threads.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use proxprior::io::{run_calibrate, run_flow, run_sample, run_summarize, run_test, RunConfig};

#[derive(Parser)]
#[command(name = "proxprior", version, about = "Proximal-mapping priors: calibration, sampling and tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of chains.
    #[arg(long, global = true)]
    chains: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Deformation curve and induced λ density for an operator family.
    Calibrate,
    /// Posterior sampling for a closed-form model.
    Sample,
    /// Set-expansion hypothesis test with a Bayes factor.
    Test,
    /// Flow-network factor model.
    Flow,
    /// Summaries and diagnostics of stored chains.
    Summarize,
}

fn run(cli: Cli) -> proxprior::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(c) = cli.chains {
        if c == 0 {
            return Err(proxprior::Error::Config("--chains must be at least 1".into()));
        }
        cfg.chains = c;
    }
    match cli.command {
        Command::Calibrate => {
            let r = run_calibrate(&cfg)?;
            println!("curve with {} knots written to {}", r.curve.lambdas.len(), cfg.out.display());
        }
        Command::Sample => {
            let chains = run_sample(&cfg)?;
            for c in &chains {
                println!(
                    "chain {}: {} draws, accept {:.3}, {} divergent",
                    c.chain_index,
                    c.len(),
                    c.accept_rate,
                    c.n_divergent
                );
            }
        }
        Command::Test => {
            let r = run_test(&cfg)?;
            println!(
                "BF01 = {} ({:?}); {} of {} draws in C; lambda = {}",
                r.bf01,
                r.flag,
                r.posterior_in_c,
                r.posterior_in_c + r.posterior_out_c,
                r.lambda
            );
        }
        Command::Flow => {
            let r = run_flow(&cfg)?;
            println!(
                "factor-count mode {} (histogram {:?})",
                r.factor_counts.mode, r.factor_counts.histogram
            );
        }
        Command::Summarize => {
            let s = run_summarize(&cfg)?;
            println!("summarized {} coordinates into {}", s.rows.len(), cfg.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(n) = std::env::var("PROXPRIOR_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring PROXPRIOR_THREADS={n:?}: expected a positive integer"),
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
