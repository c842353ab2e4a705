//! Command-line surface for zslforge.
//!
//! Settings resolve in three layers: built-in defaults, then the TOML file
//! given by `--config`, then individual flags. The resolved configuration is
//! written next to each command's outputs.

pub mod commands;
pub mod config;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "zslforge", version, about = "Two-stage transductive zero-shot learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for data generation, training and evaluation
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EpochArgs {
    #[arg(long, value_name = "N")]
    pub epochs_stage1: Option<usize>,
    #[arg(long, value_name = "N")]
    pub epochs_stage2: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark dataset
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Run stage one then stage two and write checkpoints and histories
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        epochs: EpochArgs,
    },
    /// Synthesize unseen features, fit classifiers and write reports
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Model checkpoint (default: OUT/stage2.ckpt)
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Conventional accuracy against the number of stage-one epochs
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; without it each seed generates its own
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        epochs: EpochArgs,
        /// Comma-separated stage-one epoch counts
        #[arg(long, value_delimiter = ',', value_name = "E1,E2,...")]
        grid: Option<Vec<usize>>,
        /// Comma-separated seeds
        #[arg(long, value_delimiter = ',', value_name = "S1,S2,...")]
        seeds: Option<Vec<u64>>,
    },
    /// PCA scatter of synthesized unseen features
    Plot {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Model checkpoint (default: OUT/stage2.ckpt)
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        n_per_class: Option<usize>,
    },
}

fn resolve(common: &Common, data: Option<&DataArg>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::resolve(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(dir) = data.and_then(|d| d.data.clone()) {
        cfg.data = Some(dir);
    }
    Ok(cfg)
}

fn apply_epochs(cfg: &mut RunConfig, epochs: &EpochArgs) {
    if let Some(e) = epochs.epochs_stage1 {
        cfg.train.epochs_stage1 = e;
    }
    if let Some(e) = epochs.epochs_stage2 {
        cfg.train.epochs_stage2 = e;
    }
}

/// Executes one parsed command line, printing a short summary to stdout.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = resolve(&common, None)?;
            let ds = commands::cmd_gen_data(&cfg, &common.out, common.force)?;
            println!(
                "wrote {} seen-train, {} seen-test and {} unseen rows to {}",
                ds.seen_train().len(),
                ds.seen_test().len(),
                ds.unseen_features().rows(),
                common.out.display()
            );
        }
        Command::Train {
            common,
            data,
            epochs,
        } => {
            let mut cfg = resolve(&common, Some(&data))?;
            apply_epochs(&mut cfg, &epochs);
            let out = commands::cmd_train(&cfg, &common.out, common.force)?;
            let last = |h: &zslforge::training::TrainHistory| {
                h.epochs
                    .last()
                    .map_or_else(|| "no epochs".to_string(), |e| format!("L_R {:.4}", e.reconstruction))
            };
            println!("stage 1: {} epochs, {}", out.history1.epochs.len(), last(&out.history1));
            println!("stage 2: {} epochs, {}", out.history2.epochs.len(), last(&out.history2));
            println!("checkpoints in {}", common.out.display());
        }
        Command::Evaluate {
            common,
            data,
            checkpoint,
        } => {
            let cfg = resolve(&common, Some(&data))?;
            let ckpt = checkpoint.unwrap_or_else(|| common.out.join(commands::STAGE2_CHECKPOINT));
            let out = commands::cmd_evaluate(&cfg, &ckpt, &common.out, common.force)?;
            print!(
                "{}",
                zslforge::evaluate::render_reports(&[&out.czsl, &out.gzsl])
            );
        }
        Command::Ablate {
            common,
            data,
            epochs,
            grid,
            seeds,
        } => {
            let mut cfg = resolve(&common, Some(&data))?;
            apply_epochs(&mut cfg, &epochs);
            if let Some(g) = grid {
                cfg.ablate.grid = g;
            }
            if let Some(s) = seeds {
                cfg.ablate.seeds = s;
            }
            let rows = commands::cmd_ablate(&cfg, &common.out, common.force)?;
            print!("{}", commands::ablation_summary(&rows, &cfg.ablate.grid));
        }
        Command::Plot {
            common,
            data,
            checkpoint,
            n_per_class,
        } => {
            let mut cfg = resolve(&common, Some(&data))?;
            if let Some(n) = n_per_class {
                cfg.plot.n_per_class = n;
            }
            let ckpt = checkpoint.unwrap_or_else(|| common.out.join(commands::STAGE2_CHECKPOINT));
            let svg = commands::cmd_plot(&cfg, &ckpt, &common.out, common.force)?;
            println!("wrote {}", svg.display());
        }
    }
    Ok(())
}
