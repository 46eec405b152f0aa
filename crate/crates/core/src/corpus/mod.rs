//! Text ingestion: tokenization, vocabulary, count/TFIDF vectors and
//! deterministic train/validation/test splits.

mod docset;
mod jsonl;
mod sparse_io;
mod split;
mod synth;
mod vectorize;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use docset::{prepare, DocumentSet, PrepareOptions};
pub use jsonl::{load_jsonl, parse_jsonl, tokenize, write_jsonl};
pub use sparse_io::{
    parse_sparse, parse_split_manifest, parse_vocab_file, write_sparse, write_split_manifest,
    write_vocab_file, SparseCorpus, SparseRecord,
};
pub use split::{assign_splits, split};
pub use synth::{synth_corpus, synth_documents, SynthConfig};
pub use vectorize::{vectorize, vectorize_counted, Vectorized};
pub use vocab::{build_vocabulary, build_vocabulary_counted, Vocabulary};

pub const DEFAULT_MAX_VOCAB: usize = 10_000;
pub const DEFAULT_MIN_DF: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("vocabulary needs at least 2 terms, {0} survived filtering")]
    TooFewTerms(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} split would be empty")]
    EmptySplit(Split),
    #[error("{0}")]
    Inconsistent(String),
}

impl CorpusError {
    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        Self::Malformed {
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// A tokenized document with its (possibly empty) label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: BTreeSet<String>,
}

impl Document {
    pub fn term_counts(&self) -> BTreeMap<String, f32> {
        let mut counts = BTreeMap::new();
        for t in &self.tokens {
            *counts.entry(t.clone()).or_insert(0.0) += 1.0;
        }
        counts
    }

    pub fn into_counted(self) -> CountedDocument {
        let counts = self.term_counts();
        CountedDocument {
            id: self.id,
            labels: self.labels,
            counts,
        }
    }
}

/// A document reduced to term counts. Preprocessed sparse inputs only ever
/// exist in this form.
#[derive(Debug, Clone, PartialEq)]
pub struct CountedDocument {
    pub id: String,
    pub labels: BTreeSet<String>,
    pub counts: BTreeMap<String, f32>,
}

/// Sparse nonnegative vector with strictly increasing indices and positive
/// values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f32>) -> Result<Self, CorpusError> {
        if indices.len() != values.len() {
            return Err(CorpusError::InvalidArgument(
                "sparse vector indices and values differ in length".into(),
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CorpusError::InvalidArgument(
                "sparse vector indices must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(CorpusError::InvalidArgument(
                "sparse vector values must be positive and finite".into(),
            ));
        }
        Ok(Self { indices, values })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] as f64 * other.values[j] as f64;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::new(vec![0, 2], vec![1.0, 2.0]).is_ok());
        assert!(SparseVector::new(vec![2, 2], vec![1.0, 2.0]).is_err());
        assert!(SparseVector::new(vec![0], vec![0.0]).is_err());
        assert!(SparseVector::new(vec![0, 1], vec![1.0]).is_err());
    }

    #[test]
    fn sparse_dot() {
        let a = SparseVector::new(vec![0, 3, 5], vec![1.0, 2.0, 3.0]).unwrap();
        let b = SparseVector::new(vec![3, 4, 5], vec![4.0, 9.0, 1.0]).unwrap();
        assert_eq!(a.dot(&b), 11.0);
    }

    #[test]
    fn split_names_round_trip() {
        for s in Split::ALL {
            assert_eq!(s.as_str().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }
}
