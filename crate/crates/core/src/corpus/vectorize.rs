use super::{CountedDocument, Document, SparseVector, Vocabulary};

/// Output of [`vectorize`]. `kept[i]` is the input position of the document
/// that produced `counts[i]` / `tfidf[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vectorized {
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub counts: Vec<SparseVector>,
    pub tfidf: Vec<SparseVector>,
}

fn restricted_counts(doc: &CountedDocument, vocab: &Vocabulary) -> Vec<(u32, f32)> {
    let mut entries: Vec<(u32, f32)> = doc
        .counts
        .iter()
        .filter_map(|(t, &c)| vocab.index_of(t).filter(|_| c > 0.0).map(|i| (i, c)))
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    entries
}

/// Raw counts plus L2-normalized `tf · ln((1+N)/(1+df))` weights, with `N`
/// the number of input documents. Documents with no in-vocabulary term, or
/// whose weights are all zero, are dropped.
pub fn vectorize_counted(docs: &[CountedDocument], vocab: &Vocabulary) -> Vectorized {
    let n = docs.len() as f64;
    let idf: Vec<f64> = (0..vocab.len() as u32)
        .map(|i| ((1.0 + n) / (1.0 + vocab.df(i) as f64)).ln())
        .collect();

    let mut out = Vectorized {
        kept: Vec::new(),
        dropped: Vec::new(),
        counts: Vec::new(),
        tfidf: Vec::new(),
    };
    for (pos, doc) in docs.iter().enumerate() {
        let entries = restricted_counts(doc, vocab);
        let weighted: Vec<(u32, f64)> = entries
            .iter()
            .map(|&(i, c)| (i, c as f64 * idf[i as usize]))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let norm = weighted.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        if entries.is_empty() || norm == 0.0 {
            log::warn!(
                "dropping document `{}`: {}",
                doc.id,
                if entries.is_empty() {
                    "no in-vocabulary terms"
                } else {
                    "all TFIDF weights are zero"
                }
            );
            out.dropped.push(pos);
            continue;
        }
        let (ci, cv): (Vec<u32>, Vec<f32>) = entries.into_iter().unzip();
        let (ti, tv): (Vec<u32>, Vec<f32>) = weighted
            .into_iter()
            .map(|(i, w)| (i, (w / norm) as f32))
            .filter(|&(_, w)| w > 0.0)
            .unzip();
        out.kept.push(pos);
        out.counts.push(SparseVector::new(ci, cv).expect("sorted positive counts"));
        out.tfidf.push(SparseVector::new(ti, tv).expect("sorted positive weights"));
    }
    out
}

pub fn vectorize(docs: &[Document], vocab: &Vocabulary) -> Vectorized {
    let counted: Vec<CountedDocument> = docs.iter().cloned().map(Document::into_counted).collect();
    vectorize_counted(&counted, vocab)
}
