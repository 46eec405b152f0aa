use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{prepare, CorpusError, Document, DocumentSet, PrepareOptions};

/// Clustered bag-of-words generator used as a retrieval fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_clusters: usize,
    pub docs_per_cluster: usize,
    pub vocab_size: usize,
    pub doc_length: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_clusters: 5,
            docs_per_cluster: 400,
            vocab_size: 1000,
            doc_length: 100,
            seed: 7,
        }
    }
}

/// Fraction of each document's tokens drawn from its cluster's own slice.
const IN_CLUSTER_MASS: f64 = 0.9;

/// Cluster `k` draws 90% of its tokens uniformly from the vocabulary slice
/// `[k·s, (k+1)·s)` with `s = vocab_size / num_clusters`, and the rest
/// uniformly from the whole vocabulary. Each document is labelled `c<k>`.
pub fn synth_documents(config: &SynthConfig) -> Result<Vec<Document>, CorpusError> {
    let SynthConfig {
        num_clusters,
        docs_per_cluster,
        vocab_size,
        doc_length,
        seed,
    } = *config;
    if num_clusters == 0 || docs_per_cluster == 0 || doc_length == 0 {
        return Err(CorpusError::InvalidArgument(
            "clusters, documents per cluster and length must be positive".into(),
        ));
    }
    if vocab_size < 2 * num_clusters {
        return Err(CorpusError::InvalidArgument(format!(
            "vocab size {vocab_size} must be at least twice the cluster count {num_clusters}"
        )));
    }
    let slice = vocab_size / num_clusters;
    let width = (vocab_size - 1).to_string().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(num_clusters * docs_per_cluster);
    for k in 0..num_clusters {
        for j in 0..docs_per_cluster {
            let tokens = (0..doc_length)
                .map(|_| {
                    let w = if rng.random::<f64>() < IN_CLUSTER_MASS {
                        k * slice + rng.random_range(0..slice)
                    } else {
                        rng.random_range(0..vocab_size)
                    };
                    format!("w{w:0width$}")
                })
                .collect();
            docs.push(Document {
                id: format!("c{k}-{j:05}"),
                tokens,
                labels: BTreeSet::from([format!("c{k}")]),
            });
        }
    }
    Ok(docs)
}

/// Generates documents and runs them through the standard preparation
/// pipeline with `options`.
pub fn synth_corpus(config: &SynthConfig, options: &PrepareOptions) -> Result<DocumentSet, CorpusError> {
    prepare(synth_documents(config)?.into_iter().map(Document::into_counted).collect(), options)
}
