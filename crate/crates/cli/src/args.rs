use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "zosd",
    version,
    about = "Zero-shot open-set detection: score images, evaluate splits, inspect candidates"
)]
pub struct Cli {
    #[command(flatten)]
    pub opts: Options,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one image and print the result as JSON.
    Score {
        image_id: String,
        /// Include the full label distribution.
        #[arg(long)]
        verbose: bool,
    },
    /// Evaluate one or more splits and write report files to --out.
    Evaluate,
    /// Print the openness (percent) of a task.
    Openness {
        n_train: usize,
        n_target: usize,
        n_test: usize,
    },
    /// Print the candidate unseen labels of one image, one per line.
    Candidates { image_id: String },
    /// Write the synthetic benchmark (stores, logits, splits) to --out.
    ExportSynthetic,
}

/// Options shared by every subcommand. Unset values fall back to the
/// config file, then to built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Options {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "PATH")]
    pub embeddings_images: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub embeddings_text: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub logits: Option<PathBuf>,
    /// Split file; repeat for several splits.
    #[arg(long = "split", global = true, value_name = "PATH")]
    pub splits: Vec<PathBuf>,

    /// Words taken from each decoder position [default: 35].
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Logit multiplier applied to cosine similarities [default: 100.0].
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Prompt template with one `{}` marker [default: "This is a photo of a {}."].
    #[arg(long, global = true)]
    pub template: Option<String>,
    /// Keep stop words among the candidates.
    #[arg(long, global = true)]
    pub no_stopwords: bool,
    /// Keep candidates that repeat a seen label.
    #[arg(long, global = true)]
    pub no_dedup_seen: bool,
    /// Drop candidates without a prompt embedding instead of failing.
    #[arg(long, global = true)]
    pub skip_missing_candidates: bool,

    /// Use the deterministic synthetic embedding backend.
    #[arg(long, global = true)]
    pub synthetic: bool,
    /// Synthetic embedding dimension [default: 512].
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Seed for everything synthetic [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Synthetic noise weight in [0, 1] [default: 0.1].
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Synthetic test images per class [default: 50].
    #[arg(long, global = true)]
    pub images_per_class: Option<usize>,

    /// Worker threads; 0 picks one per core [default: 0].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
