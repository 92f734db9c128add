//! Experiment runner for the long-tail classification workbench.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 runtime error
//! (I/O failures, training divergence).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use longtail_core::taxonomy::LambdaSpec;
use longtail_core::trainer::{LossKind, SamplerKind};

use commands::EnsembleArgs;
use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "longtail", version, about = "Long-tail classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Experiment config file (JSON); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed driving all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    SigmoidCe,
    Eql,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SamplerArg {
    Uniform,
    ClassAware,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (annotation JSON plus feature CSV).
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of foreground categories.
        #[arg(long)]
        num_categories: Option<u32>,
        /// Number of images per split.
        #[arg(long)]
        num_images: Option<usize>,
        /// Feature dimensionality.
        #[arg(long)]
        feature_dim: Option<usize>,
    },
    /// Train the linear classifier and evaluate on a holdout split.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Frequency threshold: `auto` or a value in [0, 1].
        #[arg(long)]
        lambda: Option<LambdaSpec>,
        /// Classification loss.
        #[arg(long)]
        loss: Option<LossArg>,
        /// Image sampler.
        #[arg(long)]
        sampler: Option<SamplerArg>,
        /// Enable overlap-based negative down-weighting.
        #[arg(long, overrides_with = "no_ignore")]
        ignore: bool,
        #[arg(long = "no-ignore", hide = true)]
        no_ignore: bool,
        /// Training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Learning rate.
        #[arg(long)]
        lr: Option<f64>,
        /// Images per minibatch.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Run the full loss x sampler x ignore ablation grid.
        #[arg(long)]
        grid: bool,
    },
    /// Valid-sample statistics under lambda = 0 and the chosen lambda.
    Stats {
        #[command(flatten)]
        common: CommonArgs,
        /// Second threshold to compare against lambda = 0 (default: auto).
        #[arg(long)]
        lambda: Option<LambdaSpec>,
        /// Also write gnuplot-friendly .dat files.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Merge detection result files, re-score and keep the top k.
    Ensemble {
        #[command(flatten)]
        common: CommonArgs,
        /// Primary detection result file (JSON).
        #[arg(long)]
        primary: PathBuf,
        /// Expert detection result files; only shared categories merge in.
        #[arg(long = "expert")]
        experts: Vec<PathBuf>,
        /// Annotation file the category table is built from.
        #[arg(long)]
        table: PathBuf,
        /// Category count override (default: largest id in the table file).
        #[arg(long)]
        num_categories: Option<u32>,
        /// Shared categories as a comma-separated id list (default: all).
        #[arg(long, value_delimiter = ',')]
        shared: Option<Vec<u32>>,
        /// Keep at most this many detections.
        #[arg(long)]
        top_k: Option<usize>,
        /// Rank offset for rare categories.
        #[arg(long)]
        alpha_rare: Option<f64>,
        /// Rank offset for common categories.
        #[arg(long)]
        alpha_common: Option<f64>,
    },
}

fn load_config(common: &CommonArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.apply_seed();
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate {
            common,
            num_categories,
            num_images,
            feature_dim,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(c) = num_categories {
                cfg.synthetic.num_categories = c;
            }
            if let Some(n) = num_images {
                cfg.synthetic.num_images = n;
            }
            if let Some(d) = feature_dim {
                cfg.synthetic.feature_dim = d;
            }
            commands::cmd_generate(&cfg)
        }
        Command::Train {
            common,
            lambda,
            loss,
            sampler,
            ignore,
            no_ignore,
            epochs,
            lr,
            batch_size,
            grid,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(lambda) = lambda {
                cfg.train.lambda = lambda;
            }
            if let Some(loss) = loss {
                cfg.train.loss_kind = match loss {
                    LossArg::SigmoidCe => LossKind::SigmoidCe,
                    LossArg::Eql => LossKind::Eql,
                };
            }
            if let Some(sampler) = sampler {
                cfg.train.sampler_kind = match sampler {
                    SamplerArg::Uniform => SamplerKind::Uniform,
                    SamplerArg::ClassAware => SamplerKind::ClassAware,
                };
            }
            if ignore {
                cfg.train.ignore_enabled = true;
            }
            if no_ignore {
                cfg.train.ignore_enabled = false;
            }
            if let Some(epochs) = epochs {
                cfg.train.epochs = epochs;
            }
            if let Some(lr) = lr {
                cfg.train.learning_rate = lr;
            }
            if let Some(batch_size) = batch_size {
                cfg.train.batch_size = batch_size;
            }
            commands::cmd_train(&cfg, grid)
        }
        Command::Stats { common, lambda, gnuplot } => {
            let cfg = load_config(&common)?;
            commands::cmd_stats(&cfg, lambda, gnuplot)
        }
        Command::Ensemble {
            common,
            primary,
            experts,
            table,
            num_categories,
            shared,
            top_k,
            alpha_rare,
            alpha_common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(top_k) = top_k {
                cfg.rescore.top_k = top_k;
            }
            if let Some(alpha_rare) = alpha_rare {
                cfg.rescore.alpha_rare = alpha_rare;
            }
            if let Some(alpha_common) = alpha_common {
                cfg.rescore.alpha_common = alpha_common;
            }
            commands::cmd_ensemble(
                &cfg,
                &EnsembleArgs {
                    primary,
                    experts,
                    table,
                    num_categories,
                    shared,
                },
            )
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core_err) = cause.downcast_ref::<longtail_core::Error>() {
            return if core_err.is_validation() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
