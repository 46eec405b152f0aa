use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentSet, Split};
use crate::diffmath::{Adam, AdamConfig, MathError};
use crate::hashing::{binarize, code_thresholds, evaluate, EvalReport, MedianScope, DEFAULT_K};

use super::elbo::{elbo, elbo_backward, make_batch, ElboOptions, Noise};
use super::encode::latent_codes;
use super::params::{ModelParams, ModelSpec};
use super::{ModelError, ModelKind, NoiseSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub bits: usize,
    pub components: usize,
    /// Weight of the supervised loss; ignored by unsupervised kinds.
    pub alpha: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Linear KL weight ramp from 0 to 1 over the first 10% of steps.
    pub kl_warmup: bool,
    pub noise_source: NoiseSource,
    pub freeze_prior: bool,
    /// Start every prior component at N(0, I), or γ = 0.5 for Bernoulli
    /// kinds. With `freeze_prior` and one component this is a plain VAE prior.
    #[serde(default)]
    pub standard_prior: bool,
    pub adam: AdamConfig,
    /// Validation precision is computed every this many epochs (0 = never).
    pub eval_every: usize,
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Bmsh,
            bits: 32,
            components: 10,
            alpha: 1.0,
            hidden: 500,
            batch_size: 100,
            epochs: 30,
            seed: 1,
            kl_warmup: false,
            noise_source: NoiseSource::Encoder,
            freeze_prior: false,
            standard_prior: false,
            adam: AdamConfig::default(),
            eval_every: 0,
            eval_k: DEFAULT_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be positive".into()));
        }
        if self.eval_k == 0 {
            return Err(ModelError::Config("evaluation K must be positive".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self, docset: &DocumentSet) -> ModelSpec {
        let label_names = if self.kind.is_supervised() {
            docset.label_names()
        } else {
            Vec::new()
        };
        ModelSpec {
            kind: self.kind,
            bits: self.bits,
            components: self.components,
            vocab_size: docset.vocab_size(),
            num_labels: label_names.len(),
            alpha: self.alpha,
            hidden: self.hidden,
            noise_source: self.noise_source,
            label_names,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_precision: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams<f32>,
    pub best_epoch: usize,
    pub log: Vec<TrainLogRow>,
    /// Loss of every optimizer step, in order.
    pub batch_losses: Vec<f64>,
}

const VAL_NOISE_STREAM: u64 = 3;

/// Mean loss over the validation split with a fixed noise stream.
fn validation_loss(
    params: &ModelParams<f32>,
    docset: &DocumentSet,
    rows: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(VAL_NOISE_STREAM);
    let mut total = 0.0;
    for chunk in rows.chunks(batch_size) {
        let batch = make_batch(docset, chunk, &params.spec)?;
        let noise = Noise::sample(chunk.len(), params.spec.bits, &mut rng);
        total += elbo(params, &batch, &noise, &ElboOptions::default())?.loss * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Hashes `db_rows` and `query_rows` with the model's test-time rule and
/// scores the queries against the database at precision@`k`.
pub fn retrieval_report(
    params: &ModelParams<f32>,
    docset: &DocumentSet,
    db_rows: &[usize],
    query_rows: &[usize],
    scope: MedianScope,
    k: usize,
) -> Result<EvalReport, ModelError> {
    let db = latent_codes(params, docset, db_rows)?;
    let q = latent_codes(params, docset, query_rows)?;
    let thresholds = code_thresholds(params.spec.kind, scope, &db, Some(&q)).map_err(hash_err)?;
    let ids = |rows: &[usize]| rows.iter().map(|&r| docset.ids()[r].clone()).collect();
    let labels = |rows: &[usize]| rows.iter().map(|&r| docset.labels()[r].clone()).collect::<Vec<_>>();
    let db_codes = binarize(&db, &thresholds, ids(db_rows)).map_err(hash_err)?;
    let q_codes = binarize(&q, &thresholds, ids(query_rows)).map_err(hash_err)?;
    evaluate(&q_codes, &labels(query_rows), &db_codes, &labels(db_rows), k).map_err(hash_err)
}

/// Validation documents as queries against the training split.
fn validation_precision(
    params: &ModelParams<f32>,
    docset: &DocumentSet,
    train_rows: &[usize],
    val_rows: &[usize],
    k: usize,
) -> Result<f64, ModelError> {
    retrieval_report(params, docset, train_rows, val_rows, MedianScope::Db, k.min(train_rows.len())).map(|r| r.mean)
}

fn hash_err(e: crate::hashing::HashError) -> ModelError {
    ModelError::Config(format!("retrieval: {e}"))
}

/// Mini-batch training with Adam. Deterministic for a given config and
/// document set.
pub fn train(config: &TrainConfig, docset: &DocumentSet) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    let spec = config.model_spec(docset);
    spec.validate()?;
    let train_rows = docset.indices_of(Split::Train);
    let val_rows = docset.indices_of(Split::Validation);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(ModelError::Config("training needs non-empty train and validation splits".into()));
    }
    if spec.kind.is_supervised() {
        for &r in train_rows.iter().chain(&val_rows) {
            if docset.labels()[r].is_empty() {
                return Err(ModelError::MissingLabel(docset.ids()[r].clone()));
            }
        }
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::<f32>::init(spec, &mut init_rng)?;
    if config.standard_prior {
        params.reset_prior_to_standard();
    }
    // Fallback for a divergence before any epoch has been validated.
    let initial = params.clone();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(2);
    let mut adam = Adam::new(config.adam);

    let steps_per_epoch = train_rows.len().div_ceil(config.batch_size);
    let total_steps = (steps_per_epoch * config.epochs) as u64;
    let warmup_steps = if config.kl_warmup { (total_steps / 10).max(1) } else { 0 };

    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    let mut batch_losses = Vec::with_capacity(total_steps as usize);
    let mut order = train_rows.clone();
    let mut step: u64 = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let kl_weight = if warmup_steps > 0 {
                ((step + 1) as f64 / warmup_steps as f64).min(1.0)
            } else {
                1.0
            };
            let opts = ElboOptions {
                kl_weight,
                ..ElboOptions::default()
            };
            let result = make_batch(docset, chunk, &params.spec).and_then(|batch| {
                let noise = Noise::sample(chunk.len(), params.spec.bits, &mut noise_rng);
                params.zero_grads();
                let terms = elbo_backward(&mut params, &batch, &noise, &opts)?;
                let mut trainable = params.trainable_mut(config.freeze_prior);
                adam.step(&mut trainable)?;
                Ok(terms)
            });
            let terms = match result {
                Ok(t) => t,
                Err(e @ (ModelError::NonFinite { .. } | ModelError::Math(MathError::NonFiniteGradient(_)))) => {
                    let last_good = best.map_or(initial, |b| b.2);
                    return Err(ModelError::Diverged {
                        epoch,
                        step,
                        cause: Box::new(e),
                        last_good: Box::new(last_good),
                    });
                }
                Err(e) => return Err(e),
            };
            params.zero_grads();
            batch_losses.push(terms.loss);
            epoch_loss += terms.loss * chunk.len() as f64;
            step += 1;
        }
        let train_loss = epoch_loss / train_rows.len() as f64;
        let val_loss = validation_loss(&params, docset, &val_rows, config.batch_size, config.seed)?;
        let val_precision = if config.eval_every > 0 && epoch % config.eval_every == 0 {
            Some(validation_precision(&params, docset, &train_rows, &val_rows, config.eval_k)?)
        } else {
            None
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.4} val {val_loss:.4}{}",
            val_precision.map(|p| format!(" p@{} {p:.4}", config.eval_k)).unwrap_or_default()
        );
        log.push(TrainLogRow {
            epoch,
            train_loss,
            val_loss,
            val_precision,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        log,
        batch_losses,
    })
}

/// `epoch  train_loss  val_loss  val_precision<k>` as TSV; the precision
/// column is empty on epochs without evaluation.
pub fn write_train_log(out: &mut impl Write, rows: &[TrainLogRow], k: usize) -> std::io::Result<()> {
    writeln!(out, "epoch\ttrain_loss\tval_loss\tval_precision{k}")?;
    for r in rows {
        let p = r.val_precision.map(|p| p.to_string()).unwrap_or_default();
        writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.train_loss, r.val_loss, p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, PrepareOptions, SynthConfig};

    fn corpus() -> DocumentSet {
        let cfg = SynthConfig {
            num_clusters: 3,
            docs_per_cluster: 60,
            vocab_size: 90,
            doc_length: 30,
            seed: 2,
        };
        synth_corpus(&cfg, &PrepareOptions::default()).unwrap()
    }

    fn small_config(kind: ModelKind) -> TrainConfig {
        TrainConfig {
            kind,
            bits: 8,
            components: 3,
            hidden: 32,
            batch_size: 20,
            epochs: 2,
            eval_every: 1,
            eval_k: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let ds = corpus();
        let cfg = small_config(ModelKind::Bmsh);
        let a = train(&cfg, &ds).unwrap();
        let b = train(&cfg, &ds).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn zero_components_rejected() {
        let mut cfg = small_config(ModelKind::Gmsh);
        cfg.components = 0;
        assert!(matches!(train(&cfg, &corpus()), Err(ModelError::Config(_))));
    }

    #[test]
    fn supervised_kinds_train() {
        let ds = corpus();
        let out = train(&small_config(ModelKind::GmshS), &ds).unwrap();
        assert_eq!(out.params.spec.label_names, vec!["c0", "c1", "c2"]);
        assert!(out.log.iter().all(|r| r.val_loss.is_finite()));
    }

    #[test]
    fn log_format() {
        let rows = vec![
            TrainLogRow {
                epoch: 1,
                train_loss: 2.5,
                val_loss: 3.0,
                val_precision: None,
            },
            TrainLogRow {
                epoch: 2,
                train_loss: 2.0,
                val_loss: 2.75,
                val_precision: Some(0.5),
            },
        ];
        let mut buf = Vec::new();
        write_train_log(&mut buf, &rows, 100).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch\ttrain_loss\tval_loss\tval_precision100\n1\t2.5\t3\t\n2\t2\t2.75\t0.5\n"
        );
    }
}
