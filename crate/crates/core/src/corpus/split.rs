use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, DocumentSet, Split};

/// Seeded shuffle of `0..n` followed by contiguous train/validation/test
/// assignment. Sizes are `round(n·train)`, `round(n·validation)` and the
/// remainder.
pub fn assign_splits(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Split>, CorpusError> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(r.is_finite() && *r > 0.0)) || (tr + va + te - 1.0).abs() > 1e-6 {
        return Err(CorpusError::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let n_train = (n as f64 * tr).round() as usize;
    let n_val = (n as f64 * va).round() as usize;
    if n_train == 0 {
        return Err(CorpusError::EmptySplit(Split::Train));
    }
    if n_val == 0 {
        return Err(CorpusError::EmptySplit(Split::Validation));
    }
    if n_train + n_val >= n {
        return Err(CorpusError::EmptySplit(Split::Test));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Test; n];
    for (rank, &doc) in order.iter().enumerate() {
        out[doc] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(out)
}

/// Returns `docset` with a fresh split assignment.
pub fn split(mut docset: DocumentSet, ratios: (f64, f64, f64), seed: u64) -> Result<DocumentSet, CorpusError> {
    docset.split = assign_splits(docset.len(), ratios, seed)?;
    Ok(docset)
}
