//! `adablur`: demos, training, evaluation and analysis for content-aware
//! anti-aliased downsampling.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 when a command fails.

mod commands;
mod noise_field;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "adablur", version, about = "Content-aware anti-aliased downsampling")]
pub struct Cli {
    /// Seed for initialization, data and evaluation pairs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Shifted-signal max-pooling example, without and with each blur.
    AliasDemo {
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Blur and downsample a PGM/PPM image.
    Blur(BlurArgs),
    /// Train one classifier on the synthetic task.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        task: TaskArgs,
    },
    /// Evaluate a saved classifier on the synthetic task.
    Eval {
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
    },
    /// Compare blur providers on the same task and seeds.
    Ablate {
        /// Comma-separated providers, e.g. none,gaussian,spatial,grouped:8.
        #[arg(long)]
        providers: Option<String>,
        #[arg(long, value_enum, default_value_t = AblateTask::Cls)]
        task_kind: AblateTask,
        #[command(flatten)]
        task: TaskArgs,
    },
    /// Accuracy and consistency of the grouped provider versus group count.
    Sweep {
        /// Comma-separated group counts; each must divide every stage width.
        #[arg(long)]
        groups: Option<String>,
        #[command(flatten)]
        task: TaskArgs,
    },
    /// Export filter-variance heatmaps and group-similarity matrices.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        /// Stage whose blur is analyzed.
        #[arg(long, default_value_t = 0)]
        layer: usize,
        /// Test images to analyze.
        #[arg(long, default_value_t = 4)]
        samples: usize,
        /// Group count for the similarity matrix (default: the stage's filter groups).
        #[arg(long)]
        groups: Option<usize>,
        #[command(flatten)]
        task: TaskArgs,
    },
    /// Shift-consistency metric from prediction dumps.
    Consistency(ConsistencyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateTask {
    /// Trained classifiers on the shifted-pattern task.
    Cls,
    /// Training-free texture segmentation scored by segmentation consistency.
    Semseg,
}

#[derive(Args, Debug)]
pub struct BlurArgs {
    /// Input PGM/PPM (plain or binary).
    #[arg(long, required_unless_present = "demo")]
    pub input: Option<PathBuf>,
    /// Output image (default: <out>/blurred.pgm or .ppm).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// none, gaussian, box, image, spatial or grouped.
    #[arg(long, default_value = "none")]
    pub blur: String,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    /// Gaussian width; for adaptive kinds without a predictor, the widest sigma.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Checkpoint directory with `conv.weight`, `conv.bias`, `bn.*` predictor tensors.
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    /// Run the none / Gaussian / content-aware comparison on the bundled image.
    #[arg(long)]
    pub demo: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "none")]
    pub blur: String,
    #[arg(long, default_value_t = 8)]
    pub groups: usize,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TaskArgs {
    /// key = value config; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Comma-separated patterns, e.g. hbars4,vbars4,checker1,blob.
    #[arg(long)]
    pub vocabulary: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Comma-separated stage widths.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Random shift pairs for consistency.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Train with predictor parameters fixed.
    #[arg(long)]
    pub freeze_predictor: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricTask {
    Cls,
    Semseg,
    Instseg,
}

#[derive(Args, Debug)]
pub struct ConsistencyArgs {
    #[arg(long, value_enum)]
    pub task: MetricTask,
    /// Pair list. cls: `label_a label_b`; semseg: `image map_a ya xa map_b yb xb`;
    /// instseg: `dir_a ya xa dir_b yb xb`. Paths are relative to the list.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Instance IoU above which a counterpart counts.
    #[arg(long, default_value_t = 0.9)]
    pub iou_threshold: f64,
    /// Match instances regardless of class.
    #[arg(long)]
    pub ignore_class: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            commands::usage_error("--threads must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
