use std::collections::HashMap;

use super::{CorpusError, CountedDocument, Document};

/// Dense term index with per-term document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    df: Vec<u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from `(term, df)` pairs in index order.
    pub fn from_entries(entries: Vec<(String, u32)>) -> Result<Self, CorpusError> {
        if entries.len() < 2 {
            return Err(CorpusError::TooFewTerms(entries.len()));
        }
        let mut terms = Vec::with_capacity(entries.len());
        let mut df = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (term, d)) in entries.into_iter().enumerate() {
            if index.insert(term.clone(), i as u32).is_some() {
                return Err(CorpusError::Inconsistent(format!("term `{term}` appears twice")));
            }
            terms.push(term);
            df.push(d);
        }
        Ok(Self { terms, index, df })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> Option<&str> {
        self.terms.get(index as usize).map(String::as_str)
    }

    pub fn df(&self, index: u32) -> u32 {
        self.df[index as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str, u32)> + '_ {
        self.terms
            .iter()
            .zip(&self.df)
            .enumerate()
            .map(|(i, (t, &d))| (i as u32, t.as_str(), d))
    }
}

/// Keeps terms with document frequency `>= min_df`, ranks them by total count
/// (descending, ties lexicographic) and truncates to `max_vocab`.
pub fn build_vocabulary_counted(
    docs: &[CountedDocument],
    max_vocab: usize,
    min_df: usize,
) -> Result<Vocabulary, CorpusError> {
    if max_vocab < 2 {
        return Err(CorpusError::InvalidArgument("max_vocab must be at least 2".into()));
    }
    if min_df < 1 {
        return Err(CorpusError::InvalidArgument("min_df must be at least 1".into()));
    }
    let mut stats: HashMap<&str, (u32, f64)> = HashMap::new();
    for d in docs {
        for (term, &c) in &d.counts {
            let e = stats.entry(term.as_str()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += c as f64;
        }
    }
    let mut ranked: Vec<(&str, u32, f64)> = stats
        .into_iter()
        .filter(|&(_, (df, _))| df as usize >= min_df)
        .map(|(t, (df, total))| (t, df, total))
        .collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_vocab);
    Vocabulary::from_entries(ranked.into_iter().map(|(t, df, _)| (t.to_string(), df)).collect())
}

pub fn build_vocabulary(
    docs: &[Document],
    max_vocab: usize,
    min_df: usize,
) -> Result<Vocabulary, CorpusError> {
    let counted: Vec<CountedDocument> = docs.iter().cloned().map(Document::into_counted).collect();
    build_vocabulary_counted(&counted, max_vocab, min_df)
}
