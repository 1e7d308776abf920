//! `wvt`: corpus preparation, statistics, training and evaluation of
//! metadata-supervised video embeddings.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wvt_core::Source;

#[derive(Parser, Debug)]
#[command(name = "wvt", version, about = "Metadata-supervised video embedding toolkit")]
pub struct Cli {
    /// Seed for every random choice (initialisation, sampling, splits, generation)
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 runs sequentially, 0 uses all cores
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More progress output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only print errors
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Keep the top N results of every query
    Subset {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_query: u64,
    },
    /// Drop short, recent and denylisted videos
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// One video id per line
        #[arg(long)]
        denylist: Option<PathBuf>,
    },
    /// Corpus statistics, optionally over growing top-N-per-query subsets
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ascending subset sizes, e.g. 1000,10000,100000
        #[arg(long, value_delimiter = ',')]
        subset_sizes: Vec<u64>,
        /// Average word counts over non-empty entries only
        #[arg(long)]
        nonmissing_only: bool,
        /// Also write a `size indicator value` table for plotting
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Train the video head and projections
    Train(TrainCmd),
    /// Evaluate a trained model
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Write a synthetic corpus with known class structure
    Gen(GenCmd),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Corpus file (one JSON record per line)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Video feature file
    #[arg(long)]
    pub video_feats: PathBuf,
    /// Token embedding file
    #[arg(long)]
    pub token_embs: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Hidden layer widths of the video head
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    /// Width of the learned video representation
    #[arg(long, default_value_t = 32)]
    pub video_width: usize,
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Examples per gradient chunk; negatives come from the same chunk
    #[arg(long, default_value_t = 16)]
    pub chunk: usize,
    #[arg(long, default_value_t = 200)]
    pub warmup: u64,
    #[arg(long, default_value_t = 0.001)]
    pub lr_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lr_peak: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    /// Exclude biases from weight decay
    #[arg(long)]
    pub no_bias_decay: bool,
    /// Negatives per anchor and source
    #[arg(long, default_value_t = 15)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Use one negative draw for all sources of an anchor
    #[arg(long)]
    pub share_negatives: bool,
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Metadata sources to train on
    #[arg(long, value_delimiter = ',', default_value = "title,description,tags,channel")]
    pub sources: Vec<Source>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Checkpoint path (rewritten at every interval and at the end)
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step metrics log
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Save a checkpoint every N steps (0 = only at the end)
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Continue from a checkpoint that carries training state
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// End this invocation once the step count reaches N; the schedule still
    /// runs to --steps, so a later --resume picks up where this left off
    #[arg(long)]
    pub stop_after: Option<u64>,
    /// Log wall_ms as 0 so repeated runs write identical metrics
    #[arg(long)]
    pub omit_wall_time: bool,
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Recall@k and median rank of each video's own metadata
    Retrieval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Sources to evaluate (default: all sources of the model)
        #[arg(long, value_delimiter = ',')]
        sources: Option<Vec<Source>>,
        /// Report path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear probe on frozen video representations against corpus labels
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-train once per source subset and probe each result
    Ablation {
        #[command(flatten)]
        data: DataArgs,
        /// Semicolon-separated source lists, e.g. "title;tags;title,tags"
        #[arg(long, default_value = "title;description;tags;channel;title,description,tags,channel")]
        subsets: String,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        optim: OptimArgs,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ProbeArgs {
    /// Fraction of each class held out for testing
    #[arg(long, default_value_t = 0.5)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 500)]
    pub probe_steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub probe_lr: f64,
}

#[derive(Args, Debug)]
pub struct GenCmd {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Instance noise scale
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 64)]
    pub input_width: usize,
    #[arg(long, default_value_t = 64)]
    pub text_width: usize,
    /// Per-source noise multipliers: title,description,tags,channel
    #[arg(long, value_delimiter = ',', default_value = "0.1,3,6,12")]
    pub source_noise: Vec<f64>,
    /// Output directory for corpus.jsonl, video.wvtv and tokens.wvte
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
