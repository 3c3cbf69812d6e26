use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lhnn_nuts::app::{self, RunConfig};
use lhnn_nuts::Error;

#[derive(Parser)]
#[command(name = "lhnn", version, about = "NUTS with latent Hamiltonian neural network surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Harvest training data and fit a surrogate.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Draw one chain.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Trained surrogate, required for the lhnn modes.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Classical vs surrogate NUTS on every listed target.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// ESS, occupancy and energy traces for existing chains.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Chain CSVs written by `sample` or `benchmark`.
        chains: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Cmd::Train { common } => {
            let (cfg, out) = load(&common)?;
            let s = app::cli_train(&cfg, &out)?;
            println!(
                "checkpoint {} (final loss {:.4e}, {} harvest gradients)",
                s.checkpoint.display(),
                s.final_loss,
                s.harvest_gradients
            );
        }
        Cmd::Sample { common, checkpoint } => {
            let (cfg, out) = load(&common)?;
            let chain = app::cli_sample(&cfg, checkpoint.as_deref(), &out)?;
            println!(
                "{} samples in {}, {} exact gradients, {} surrogate evaluations",
                chain.samples.len(),
                out.display(),
                chain.ledger.exact_gradients,
                chain.ledger.surrogate_evals
            );
        }
        Cmd::Benchmark { common } => {
            let (cfg, out) = load(&common)?;
            let rows = app::cli_benchmark(&cfg, &out)?;
            print!(
                "{}",
                lhnn_nuts::diagnostics::format_report(&rows, cfg.report.ess_variant)
            );
        }
        Cmd::Diagnose {
            common,
            checkpoint,
            chains,
        } => {
            let (cfg, out) = load(&common)?;
            let report = app::cli_diagnose(&cfg, checkpoint.as_deref(), &chains, &out)?;
            for c in &report.chains {
                println!("{}: min ESS {:.1}", c.path.display(), c.ess.min);
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(app::exit_code(&e) as u8)
        }
    }
}
