//! Command-line front end: generate benchmark data, train, evaluate, and
//! run ablations or hyperparameter sweeps.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use cmpgnn::interface::{
    self, apply_seed_override, load_config, print_summaries, resolve_out_dir,
};
use cmpgnn::Result;

#[derive(Parser)]
#[command(
    name = "cmpgnn",
    about = "Graph domain adaptation via cross-domain link prediction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured CSBM source/target pair as dataset files.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the generator seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one run and emit metrics, summary, embeddings, and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (falls back to `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Training variant: full, gcn_da, random_link, or no_mi.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Compute metrics for a saved checkpoint on the configured datasets.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every training variant on the same config, one directory each.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expand the sweep grid over loss weights and run each combination.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                apply_seed_override(&mut cfg, seed);
            }
            interface::run_generate(&cfg, &out)?;
            println!("wrote datasets to {}", out.display());
        }
        Command::Train {
            config,
            out,
            seed,
            mode,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                apply_seed_override(&mut cfg, seed);
            }
            if let Some(mode) = mode {
                cfg.train.ablation = mode;
            }
            let out = resolve_out_dir(&cfg, out)?;
            let summary = interface::run_experiment(&cfg, &out)?;
            print_summaries(
                &mut std::io::stdout(),
                &[(cfg.run_label.as_str(), summary)],
            )?;
            println!("outputs in {}", out.display());
        }
        Command::Evaluate { checkpoint, config } => {
            let cfg = load_config(&config)?;
            let report = interface::run_evaluate(&checkpoint, &cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable")
            );
        }
        Command::Ablate { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                apply_seed_override(&mut cfg, seed);
            }
            let out = resolve_out_dir(&cfg, out)?;
            let summaries = interface::run_ablate(&cfg, &out)?;
            print_summaries(&mut std::io::stdout(), &summaries)?;
            println!("outputs in {}", out.display());
        }
        Command::Sweep { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                apply_seed_override(&mut cfg, seed);
            }
            let out = resolve_out_dir(&cfg, out)?;
            let summaries = interface::run_sweep(&cfg, &out)?;
            print_summaries(&mut std::io::stdout(), &summaries)?;
            println!("outputs in {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e);
        std::process::exit(e.exit_code());
    }
}
