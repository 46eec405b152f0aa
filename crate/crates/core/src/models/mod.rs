//! Mixture-prior generative hashing models.
//!
//! Four variants share one encoder/decoder skeleton:
//!
//! | kind     | latent posterior           | prior                      | labels |
//! |----------|----------------------------|----------------------------|--------|
//! | `gmsh`   | diagonal Gaussian          | Gaussian mixture           | no     |
//! | `bmsh`   | factorized Bernoulli (ST)  | Bernoulli mixture          | no     |
//! | `gmsh-s` | diagonal Gaussian          | Gaussian mixture           | yes    |
//! | `bmsh-s` | factorized Bernoulli (ST)  | Bernoulli mixture          | yes    |
//!
//! The decoder is always the linear softmax `log p(w|z) = log_softmax(zᵀE + b)[w]`.

mod checkpoint;
mod elbo;
mod encode;
mod gradcheck;
mod kl;
mod params;
mod sampling;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::diffmath::MathError;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use elbo::{
    elbo, elbo_backward, make_batch, reconstruction_loglik, supervised_loss, Batch, ElboOptions, ElboTerms, Noise,
};
pub use encode::{encode, latent_codes, LatentBatch};
pub use gradcheck::{
    gradcheck_tiny, GradcheckOptions, TINY_BATCH, TINY_BITS, TINY_COMPONENTS, TINY_HIDDEN, TINY_LABELS, TINY_VOCAB,
};
pub use kl::{expected_kl_bernoulli, expected_kl_gaussian, kl_categorical, logit};
pub use params::{Affine, Classifier, Decoder, Encoder, ModelParams, ModelSpec, Prior};
pub use sampling::{
    inject_noise, inject_noise_backward, reparam_backward, reparam_gaussian, sample_bernoulli_st, st_backward,
};
pub use train::{retrieval_report, train, write_train_log, TrainConfig, TrainLogRow, TrainOutcome};

/// Bounds applied to every log-variance (posterior, prior and noise).
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;
/// Bernoulli probabilities are clamped to `[ALPHA_EPS, 1 - ALPHA_EPS]` inside the KL.
pub const ALPHA_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "gmsh")]
    Gmsh,
    #[serde(rename = "bmsh")]
    Bmsh,
    #[serde(rename = "gmsh-s")]
    GmshS,
    #[serde(rename = "bmsh-s")]
    BmshS,
}

impl ModelKind {
    pub fn is_bernoulli(self) -> bool {
        matches!(self, ModelKind::Bmsh | ModelKind::BmshS)
    }

    pub fn is_supervised(self) -> bool {
        matches!(self, ModelKind::GmshS | ModelKind::BmshS)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gmsh => "gmsh",
            ModelKind::Bmsh => "bmsh",
            ModelKind::GmshS => "gmsh-s",
            ModelKind::BmshS => "bmsh-s",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gmsh" => Ok(ModelKind::Gmsh),
            "bmsh" => Ok(ModelKind::Bmsh),
            "gmsh-s" => Ok(ModelKind::GmshS),
            "bmsh-s" => Ok(ModelKind::BmshS),
            other => Err(ModelError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Where the Bernoulli models take the variance of the reconstruction noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSource {
    /// A dedicated encoder head produces a per-document log-variance.
    #[default]
    Encoder,
    /// Learned per-component log-variances, mixed by the responsibilities.
    Component,
}

impl fmt::Display for NoiseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseSource::Encoder => "encoder",
            NoiseSource::Component => "component",
        })
    }
}

impl FromStr for NoiseSource {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "encoder" => Ok(NoiseSource::Encoder),
            "component" => Ok(NoiseSource::Component),
            other => Err(ModelError::Config(format!("unknown noise source `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("non-finite {term} (batch mean {value})")]
    NonFinite { term: &'static str, value: f64 },
    #[error("training diverged at epoch {epoch}, step {step}: {cause}")]
    Diverged {
        epoch: usize,
        step: u64,
        cause: Box<ModelError>,
        last_good: Box<ModelParams<f32>>,
    },
    #[error("document `{0}` has no label but the model is supervised")]
    MissingLabel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
