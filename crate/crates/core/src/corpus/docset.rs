use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sparse_io::{
    parse_sparse, parse_split_manifest, parse_vocab_file, write_sparse, write_split_manifest,
    write_vocab_file, SparseCorpus,
};
use super::split::assign_splits;
use super::{
    build_vocabulary_counted, vectorize_counted, CorpusError, CountedDocument, SparseVector, Split,
    Vocabulary, DEFAULT_MAX_VOCAB, DEFAULT_MIN_DF,
};

pub const COUNTS_FILE: &str = "counts.sparse";
pub const TFIDF_FILE: &str = "tfidf.sparse";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const SPLIT_FILE: &str = "split.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub max_vocab: usize,
    pub min_df: usize,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            max_vocab: DEFAULT_MAX_VOCAB,
            min_df: DEFAULT_MIN_DF,
            ratios: (0.8, 0.1, 0.1),
            seed: 1,
        }
    }
}

/// A vectorized corpus: per-document counts, TFIDF inputs, labels and split.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentSet {
    pub(super) vocab: Vocabulary,
    pub(super) ids: Vec<String>,
    pub(super) labels: Vec<BTreeSet<String>>,
    pub(super) counts: Vec<SparseVector>,
    pub(super) tfidf: Vec<SparseVector>,
    pub(super) split: Vec<Split>,
}

impl DocumentSet {
    pub fn new(
        vocab: Vocabulary,
        ids: Vec<String>,
        labels: Vec<BTreeSet<String>>,
        counts: Vec<SparseVector>,
        tfidf: Vec<SparseVector>,
        split: Vec<Split>,
    ) -> Result<Self, CorpusError> {
        let n = ids.len();
        if [labels.len(), counts.len(), tfidf.len(), split.len()].iter().any(|&l| l != n) {
            return Err(CorpusError::Inconsistent("document set columns differ in length".into()));
        }
        let v = vocab.len() as u32;
        if counts
            .iter()
            .chain(&tfidf)
            .any(|s| s.indices().last().is_some_and(|&i| i >= v))
        {
            return Err(CorpusError::Inconsistent("sparse index outside vocabulary".into()));
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::DuplicateId { id: id.clone(), line: 0 });
            }
        }
        Ok(Self {
            vocab,
            ids,
            labels,
            counts,
            tfidf,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[BTreeSet<String>] {
        &self.labels
    }

    pub fn counts(&self) -> &[SparseVector] {
        &self.counts
    }

    pub fn tfidf(&self) -> &[SparseVector] {
        &self.tfidf
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    /// Positions of the documents assigned to `split`, in corpus order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// Sorted list of every label that occurs in the corpus.
    pub fn label_names(&self) -> Vec<String> {
        let all: BTreeSet<&String> = self.labels.iter().flatten().collect();
        all.into_iter().cloned().collect()
    }

    /// Writes the four cache files into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let mut buf = Vec::new();
        write_sparse(&mut buf, self.vocab.len(), self.len(), self.records(&self.counts))?;
        write_file(&dir.join(COUNTS_FILE), &buf)?;
        buf.clear();
        write_sparse(&mut buf, self.vocab.len(), self.len(), self.records(&self.tfidf))?;
        write_file(&dir.join(TFIDF_FILE), &buf)?;
        buf.clear();
        write_vocab_file(&mut buf, &self.vocab)?;
        write_file(&dir.join(VOCAB_FILE), &buf)?;
        buf.clear();
        write_split_manifest(&mut buf, self.ids.iter().map(String::as_str).zip(self.split.iter().copied()))?;
        write_file(&dir.join(SPLIT_FILE), &buf)
    }

    fn records<'a>(&'a self, vecs: &'a [SparseVector]) -> Vec<(&'a str, &'a BTreeSet<String>, &'a SparseVector)> {
        self.ids
            .iter()
            .zip(&self.labels)
            .zip(vecs)
            .map(|((id, l), v)| (id.as_str(), l, v))
            .collect()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let counts = parse_sparse(&read_file(&dir.join(COUNTS_FILE))?)?;
        let tfidf = parse_sparse(&read_file(&dir.join(TFIDF_FILE))?)?;
        let vocab = parse_vocab_file(&read_file(&dir.join(VOCAB_FILE))?)?;
        let splits = parse_split_manifest(&read_file(&dir.join(SPLIT_FILE))?)?;
        if counts.vocab_size != vocab.len() || tfidf.vocab_size != vocab.len() {
            return Err(CorpusError::Inconsistent(format!(
                "vocabulary has {} terms but cache files declare {} and {}",
                vocab.len(),
                counts.vocab_size,
                tfidf.vocab_size
            )));
        }
        if counts.records.len() != tfidf.records.len()
            || counts.records.iter().zip(&tfidf.records).any(|(a, b)| a.id != b.id)
        {
            return Err(CorpusError::Inconsistent("count and TFIDF files list different documents".into()));
        }
        let split = counts
            .records
            .iter()
            .map(|r| {
                splits
                    .get(&r.id)
                    .copied()
                    .ok_or_else(|| CorpusError::Inconsistent(format!("document `{}` has no split", r.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut ids = Vec::with_capacity(split.len());
        let mut labels = Vec::with_capacity(split.len());
        let mut count_vecs = Vec::with_capacity(split.len());
        for r in counts.records {
            ids.push(r.id);
            labels.push(r.labels);
            count_vecs.push(r.vector);
        }
        let tfidf_vecs = tfidf.records.into_iter().map(|r| r.vector).collect();
        Self::new(vocab, ids, labels, count_vecs, tfidf_vecs, split)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    fs::write(path, bytes).map_err(|e| CorpusError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))
}

impl SparseCorpus {
    /// Treats each stored value as a term count, naming terms by their
    /// original index.
    pub fn into_counted(self) -> Vec<CountedDocument> {
        self.records
            .into_iter()
            .map(|r| CountedDocument {
                id: r.id,
                labels: r.labels,
                counts: r
                    .vector
                    .iter()
                    .map(|(i, v)| (i.to_string(), v))
                    .collect::<BTreeMap<_, _>>(),
            })
            .collect()
    }
}

/// Vocabulary, vectorization and split in one deterministic pass.
pub fn prepare(docs: Vec<CountedDocument>, options: &PrepareOptions) -> Result<DocumentSet, CorpusError> {
    let vocab = build_vocabulary_counted(&docs, options.max_vocab, options.min_df)?;
    let vectors = vectorize_counted(&docs, &vocab);
    if !vectors.dropped.is_empty() {
        log::warn!("{} of {} documents dropped during vectorization", vectors.dropped.len(), docs.len());
    }
    let split = assign_splits(vectors.kept.len(), options.ratios, options.seed)?;
    let mut ids = Vec::with_capacity(vectors.kept.len());
    let mut labels = Vec::with_capacity(vectors.kept.len());
    let mut docs: Vec<Option<CountedDocument>> = docs.into_iter().map(Some).collect();
    for &k in &vectors.kept {
        let d = docs[k].take().expect("each document kept once");
        ids.push(d.id);
        labels.push(d.labels);
    }
    DocumentSet::new(vocab, ids, labels, vectors.counts, vectors.tfidf, split)
}
