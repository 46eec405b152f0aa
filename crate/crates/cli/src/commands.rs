use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mixhash::corpus::{
    load_jsonl, parse_sparse, prepare as prepare_corpus, synth_documents, write_jsonl, Document, DocumentSet,
    PrepareOptions, Split, SynthConfig,
};
use mixhash::diffmath::{AdamConfig, Matrix};
use mixhash::hashing::{
    binarize, code_thresholds, evaluate, parse_codes, parse_thresholds, write_codes, write_eval_report,
    write_thresholds, BinaryCodebook, MedianScope,
};
use mixhash::models::{
    gradcheck_tiny, latent_codes, load_checkpoint, save_checkpoint, train as train_model, write_train_log,
    GradcheckOptions, ModelError, TrainConfig,
};
use serde::Serialize;

use crate::{EvalArgs, GradcheckArgs, HashArgs, InputFormat, PrepareArgs, SynthArgs, TrainArgs, Usage};

#[derive(Serialize)]
struct Echo<'a, A: Serialize, R: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a A,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolved: Option<&'a R>,
}

fn echo<A: Serialize, R: Serialize>(path: &Path, command: &str, args: &A, resolved: Option<&R>) -> Result<()> {
    let echo = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
        resolved,
    };
    let mut text = serde_json::to_string_pretty(&echo)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Config echo for commands whose output is a single file.
fn sibling_echo(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    out.with_file_name(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let docs = match args.format {
        InputFormat::Jsonl => load_jsonl(&args.input)?
            .into_iter()
            .map(Document::into_counted)
            .collect(),
        InputFormat::Sparse => parse_sparse(&read_text(&args.input)?)
            .with_context(|| format!("parsing {}", args.input.display()))?
            .into_counted(),
    };
    let options = PrepareOptions {
        max_vocab: args.max_vocab,
        min_df: args.min_df,
        ratios: (args.ratios[0], args.ratios[1], args.ratios[2]),
        seed: args.seed,
    };
    let ds = prepare_corpus(docs, &options)?;
    ds.save(&args.out)?;
    echo(&args.out.join("config.json"), "prepare", &args, Some(&options))?;
    let count = |s| ds.indices_of(s).len();
    println!(
        "{} documents, {} terms; train {} / validation {} / test {}",
        ds.len(),
        ds.vocab_size(),
        count(Split::Train),
        count(Split::Validation),
        count(Split::Test)
    );
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig, Usage> {
    if args.bits == 0 {
        return Err(Usage("--bits must be positive".into()));
    }
    if args.clip_norm < 0.0 || !args.clip_norm.is_finite() {
        return Err(Usage("--clip-norm must be a finite non-negative number".into()));
    }
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        return Err(Usage("--lr must be positive".into()));
    }
    if args.decay_steps == 0 {
        return Err(Usage("--decay-steps must be positive".into()));
    }
    Ok(TrainConfig {
        kind: args.model,
        bits: args.bits,
        components: args.components,
        alpha: args.alpha,
        hidden: args.hidden,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        kl_warmup: args.kl_warmup,
        noise_source: args.noise_source,
        freeze_prior: args.freeze_prior,
        standard_prior: args.standard_prior,
        adam: AdamConfig {
            learning_rate: args.lr,
            decay: args.decay,
            decay_interval: args.decay_steps,
            clip_norm: (args.clip_norm > 0.0).then_some(args.clip_norm),
            ..AdamConfig::default()
        },
        eval_every: args.eval_every,
        eval_k: args.eval_k,
    })
}

pub fn train(args: TrainArgs) -> Result<()> {
    let config = train_config(&args)?;
    config.validate()?;
    let ds = DocumentSet::load(&args.data)?;
    config.model_spec(&ds).validate()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    echo(&args.out.join("config.json"), "train", &args, Some(&config))?;
    let outcome = match train_model(&config, &ds) {
        Ok(o) => o,
        Err(ModelError::Diverged {
            epoch,
            step,
            cause,
            last_good,
        }) => {
            let path = args.out.join("last_good.ckpt");
            save_checkpoint(&path, &last_good)?;
            anyhow::bail!(
                "training diverged at epoch {epoch}, step {step}: {cause}; last good parameters saved to {}",
                path.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(args.out.join("model.ckpt"), &outcome.params)?;
    let mut log = Vec::new();
    write_train_log(&mut log, &outcome.log, config.eval_k)?;
    write_file(&args.out.join("train_log.tsv"), &log)?;
    let best = &outcome.log[outcome.best_epoch - 1];
    println!(
        "best epoch {} (validation loss {:.4}); checkpoint written to {}",
        outcome.best_epoch,
        best.val_loss,
        args.out.join("model.ckpt").display()
    );
    Ok(())
}

fn write_embeddings(path: &Path, ids: &[String], latents: &Matrix) -> Result<()> {
    let mut buf = Vec::new();
    for (id, row) in ids.iter().zip(latents.iter_rows()) {
        write!(buf, "{id}")?;
        for v in row {
            write!(buf, "\t{v}")?;
        }
        writeln!(buf)?;
    }
    write_file(path, &buf)
}

pub fn hash(args: HashArgs) -> Result<()> {
    let params = load_checkpoint(&args.checkpoint)?;
    let ds = DocumentSet::load(&args.data)?;
    if ds.vocab_size() != params.spec.vocab_size {
        return Err(Usage(format!(
            "vocabulary mismatch: checkpoint expects {} terms, dataset has {}",
            params.spec.vocab_size,
            ds.vocab_size()
        ))
        .into());
    }
    let rows = ds.indices_of(args.split.into());
    if rows.is_empty() {
        return Err(Usage(format!("split `{}` is empty", Split::from(args.split).as_str())).into());
    }
    let latents = latent_codes(&params, &ds, &rows)?;
    let ids: Vec<String> = rows.iter().map(|&r| ds.ids()[r].clone()).collect();

    let thresholds = match &args.thresholds {
        Some(path) => {
            let t = parse_thresholds(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
            if t.len() != params.spec.bits {
                return Err(Usage(format!(
                    "{} holds {} thresholds but the model has {} bits",
                    path.display(),
                    t.len(),
                    params.spec.bits
                ))
                .into());
            }
            t
        }
        None => {
            let joint = match (args.median_scope, args.joint_split) {
                (MedianScope::Joint, Some(s)) => Some(latent_codes(&params, &ds, &ds.indices_of(s.into()))?),
                _ => None,
            };
            let t = code_thresholds(params.spec.kind, args.median_scope, &latents, joint.as_ref())?;
            let path = args.save_thresholds.clone().unwrap_or_else(|| {
                let mut name = args.out.file_name().unwrap_or_default().to_os_string();
                name.push(".thresholds");
                args.out.with_file_name(name)
            });
            let mut buf = Vec::new();
            write_thresholds(&mut buf, &t)?;
            write_file(&path, &buf)?;
            t
        }
    };
    let codes = binarize(&latents, &thresholds, ids.clone())?;
    let mut buf = Vec::new();
    write_codes(&mut buf, &codes)?;
    write_file(&args.out, &buf)?;
    if let Some(path) = &args.embeddings {
        write_embeddings(path, &ids, &latents)?;
    }
    echo(&sibling_echo(&args.out), "hash", &args, None::<&()>)?;
    println!("{} codes of {} bits written to {}", codes.len(), codes.bits(), args.out.display());
    Ok(())
}

fn load_codes(path: &Path) -> Result<BinaryCodebook> {
    parse_codes(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let queries = load_codes(&args.queries)?;
    let db = load_codes(&args.db)?;
    let ds = DocumentSet::load(&args.data)?;
    let by_id: HashMap<&str, &BTreeSet<String>> = ds.ids().iter().map(String::as_str).zip(ds.labels()).collect();
    let labels = |book: &BinaryCodebook, what: &Path| -> Result<Vec<BTreeSet<String>>> {
        book.ids()
            .iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|l| (*l).clone()).ok_or_else(|| {
                    Usage(format!("document `{id}` from {} is not in the dataset", what.display())).into()
                })
            })
            .collect()
    };
    let q_labels = labels(&queries, &args.queries)?;
    let db_labels = labels(&db, &args.db)?;
    let report = evaluate(&queries, &q_labels, &db, &db_labels, args.k)?;
    let mut buf = Vec::new();
    write_eval_report(&mut buf, &report)?;
    write_file(&args.out, &buf)?;
    echo(&sibling_echo(&args.out), "eval", &args, None::<&()>)?;
    if !report.skipped.is_empty() {
        log::warn!("{} queries without labels were skipped", report.skipped.len());
    }
    println!("{:.6}", report.mean);
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let opts = GradcheckOptions {
        kind: args.model,
        noise_source: args.noise_source,
        seed: args.seed,
        epsilon: args.epsilon,
        coords_per_tensor: args.coords,
        corrupt: args.corrupt_gradient.clone(),
        ..GradcheckOptions::default()
    };
    let report = gradcheck_tiny(&opts)?;
    println!("tensor\tchecked\tmax_rel_error");
    for t in &report.tensors {
        println!("{}\t{}\t{:.3e}", t.name, t.checked, t.max_rel_error);
    }
    let worst = report.max_rel_error();
    println!("max relative error {worst:.3e} (tolerance {:.0e})", args.tolerance);
    if worst.is_nan() || worst > args.tolerance {
        anyhow::bail!(
            "gradient check failed: worst tensor {}",
            report.worst().map_or("?", |t| t.name.as_str())
        );
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        num_clusters: args.clusters,
        docs_per_cluster: args.per_cluster,
        vocab_size: args.vocab,
        doc_length: args.len,
        seed: args.seed,
    };
    let docs = synth_documents(&config)?;
    let mut buf = Vec::new();
    write_jsonl(&docs, &mut buf)?;
    write_file(&args.out, &buf)?;
    echo(&sibling_echo(&args.out), "synth", &args, Some(&config))?;
    println!("{} documents written to {}", docs.len(), args.out.display());
    Ok(())
}
