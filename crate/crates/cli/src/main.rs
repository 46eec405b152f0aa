mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixhash::corpus::CorpusError;
use mixhash::hashing::{HashError, MedianScope, DEFAULT_K};
use mixhash::models::{ModelError, ModelKind, NoiseSource};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mixhash", version, about = "Semantic hashing with mixture-prior generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary, TFIDF cache and split manifest for a corpus.
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Hash one split of a dataset into a codes file.
    Hash(HashArgs),
    /// Score query codes against database codes at precision@K.
    Eval(EvalArgs),
    /// Check analytic gradients of a tiny model against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a clustered synthetic corpus as JSONL.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum InputFormat {
    /// One JSON record per line with id, text or tokens, and labels.
    Jsonl,
    /// `mixhash-sparse v1` counts; term indices become the terms.
    Sparse,
}

#[derive(Debug, Args, Serialize)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: InputFormat,
    #[arg(long, default_value_t = mixhash::corpus::DEFAULT_MAX_VOCAB)]
    max_vocab: usize,
    #[arg(long, default_value_t = mixhash::corpus::DEFAULT_MIN_DF)]
    min_df: usize,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the checkpoint, log and config echo.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "bmsh")]
    model: ModelKind,
    #[arg(long, default_value_t = 32)]
    bits: usize,
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// Weight of the supervised loss (gmsh-s, bmsh-s).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 500)]
    hidden: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Ramp the KL weight from 0 to 1 over the first 10% of steps.
    #[arg(long)]
    kl_warmup: bool,
    #[arg(long, default_value = "encoder")]
    noise_source: NoiseSource,
    /// Keep the prior parameters at their initial values.
    #[arg(long)]
    freeze_prior: bool,
    /// Initialize every prior component at N(0, I), or γ = 0.5.
    #[arg(long)]
    standard_prior: bool,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.96)]
    decay: f64,
    #[arg(long, default_value_t = 10_000)]
    decay_steps: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    clip_norm: f64,
    /// Log validation precision every this many epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    eval_k: usize,
}

#[derive(Debug, Args, Serialize)]
struct HashArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "train")]
    split: SplitArg,
    #[arg(long)]
    out: PathBuf,
    /// Reuse thresholds saved by an earlier `hash` run instead of computing them.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Where to save the thresholds computed by this run [default: <out>.thresholds].
    #[arg(long, conflicts_with = "thresholds")]
    save_thresholds: Option<PathBuf>,
    #[arg(long, default_value = "db", conflicts_with = "thresholds")]
    median_scope: MedianScope,
    /// Query split pooled with `--split` when `--median-scope joint`.
    #[arg(long, required_if_eq("median_scope", "joint"))]
    joint_split: Option<SplitArg>,
    /// Also write the continuous latent codes as TSV.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Prepared dataset holding the labels of both code files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value = "gmsh")]
    model: ModelKind,
    #[arg(long, default_value = "encoder")]
    noise_source: NoiseSource,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    coords: usize,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    /// Doubles the analytic gradient of the named tensor before checking.
    #[arg(long, hide = true)]
    corrupt_gradient: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 400)]
    per_cluster: usize,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    #[arg(long, default_value_t = 100)]
    len: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for mixhash::corpus::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Validation => Self::Validation,
            SplitArg::Test => Self::Test,
        }
    }
}

/// A bad flag value or an input that fails validation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        if e.is::<Usage>() {
            return true;
        }
        if let Some(m) = e.downcast_ref::<ModelError>() {
            return matches!(m, ModelError::Config(_) | ModelError::MissingLabel(_));
        }
        if let Some(c) = e.downcast_ref::<CorpusError>() {
            return matches!(
                c,
                CorpusError::InvalidArgument(_) | CorpusError::TooFewTerms(_) | CorpusError::EmptySplit(_)
            );
        }
        if let Some(h) = e.downcast_ref::<HashError>() {
            return matches!(
                h,
                HashError::WidthMismatch { .. }
                    | HashError::KTooLarge { .. }
                    | HashError::InvalidArgument(_)
                    | HashError::NoScorableQueries
            );
        }
        false
    })
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already includes.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn configure_threads() -> Result<(), Usage> {
    let Ok(v) = std::env::var("MIXHASH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Usage(format!("MIXHASH_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Usage(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Hash(a) => commands::hash(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(if is_usage(&e) { 1 } else { 2 })
        }
    }
}
