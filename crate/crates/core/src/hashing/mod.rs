//! Binary codes from latent vectors, Hamming search and precision@K.

mod codebook;
mod eval;
mod io;
mod search;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codebook::{
    binarize, code_thresholds, fixed_binarize, median_binarize, median_thresholds, BinaryCodebook,
};
pub use eval::{evaluate, precision_at_k, write_eval_report, EvalReport};
pub use io::{
    parse_codes, parse_thresholds, write_codes, write_thresholds, CODES_MAGIC, THRESHOLDS_MAGIC,
};
pub use search::{hamming, topk};

/// Default retrieval depth.
pub const DEFAULT_K: usize = 100;
/// Probability threshold for Bernoulli codes.
pub const FIXED_THRESHOLD: f32 = 0.5;

#[derive(Debug, Error)]
pub enum HashError {
    #[error("code widths differ: {left} vs {right} bits")]
    WidthMismatch { left: usize, right: usize },
    #[error("K = {k} exceeds the {n} documents in the database")]
    KTooLarge { k: usize, n: usize },
    #[error("database is empty")]
    EmptyDatabase,
    #[error("every query has an empty label set")]
    NoScorableQueries,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HashError {
    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        Self::Malformed {
            line,
            reason: reason.into(),
        }
    }
}

/// Which latents the per-dimension medians are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedianScope {
    /// Database latents only; queries reuse those thresholds.
    #[default]
    Db,
    /// Database and query latents together.
    Joint,
}

impl fmt::Display for MedianScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MedianScope::Db => "db",
            MedianScope::Joint => "joint",
        })
    }
}

impl FromStr for MedianScope {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "db" => Ok(MedianScope::Db),
            "joint" => Ok(MedianScope::Joint),
            other => Err(HashError::InvalidArgument(format!("unknown median scope `{other}`"))),
        }
    }
}
