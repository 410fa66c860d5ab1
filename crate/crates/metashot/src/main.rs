use std::error::Error as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metashot::{execute, parse_config, RunOptions, Stage};

/// Desk-scale meta-learning experiments: pretraining, meta-training,
/// evaluation and analysis, driven by one plain-text configuration.
#[derive(Parser)]
#[command(name = "metashot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed (shorthand for --override seed=N).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for evaluation; 1 is the reproducibility reference
    /// and any other count must report identical results.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Config overrides, applied after the file (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Trains the frozen representation (raml/uraml methods).
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Runs the outer meta-optimization loop, checkpointing as it goes.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        /// Continue from the run's checkpoint instead of starting fresh.
        #[arg(long)]
        resume: bool,
        /// Stop early at this iteration (resume later with --resume).
        #[arg(long)]
        until: Option<u64>,
        /// Checkpoint to resume from (default: the run's checkpoint_final.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Adapts on held-out tasks and reports mean accuracy with a 95% interval.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Trained model to score (default: the run's checkpoint_final.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Representation checkpoint for raml/uraml.
        #[arg(long)]
        representation: Option<PathBuf>,
    },
    /// Trains one model per support-shot level and scores every train/test pair.
    CrossTest {
        #[command(flatten)]
        common: Common,
        /// Representation checkpoint for raml/uraml.
        #[arg(long)]
        representation: Option<PathBuf>,
    },
    /// Scores an accuracy matrix for task-level overfitting.
    Cet {
        #[command(flatten)]
        common: Common,
        /// Accuracy matrix CSV (default: the run's matrix.csv).
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Reports within-class and between-class feature distances.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        representation: Option<PathBuf>,
    },
    /// Renders channel-mean feature maps before and after the gate as PNGs.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl Command {
    fn unpack(self) -> (Stage, Common, RunOptions) {
        let mut opts = RunOptions::default();
        match self {
            Command::Pretrain { common } => (Stage::Pretrain, common, opts),
            Command::MetaTrain { common, resume, until, checkpoint } => {
                opts.resume = resume;
                opts.until = until;
                opts.checkpoint = checkpoint;
                (Stage::MetaTrain, common, opts)
            }
            Command::Evaluate { common, checkpoint, representation } => {
                opts.checkpoint = checkpoint;
                opts.representation = representation;
                (Stage::Evaluate, common, opts)
            }
            Command::CrossTest { common, representation } => {
                opts.representation = representation;
                (Stage::CrossTest, common, opts)
            }
            Command::Cet { common, matrix } => {
                opts.matrix = matrix;
                (Stage::Cet, common, opts)
            }
            Command::Features { common, checkpoint, representation } => {
                opts.checkpoint = checkpoint;
                opts.representation = representation;
                (Stage::Features, common, opts)
            }
            Command::Heatmap { common, checkpoint } => {
                opts.checkpoint = checkpoint;
                (Stage::Heatmap, common, opts)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common, mut opts) = cli.command.unpack();
    opts.threads = common.threads;

    let mut overrides = common.overrides;
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }

    let result = parse_config(&common.config, &overrides).and_then(|cfg| execute(stage, &cfg, &opts));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut cause = e.source();
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            ExitCode::FAILURE
        }
    }
}
