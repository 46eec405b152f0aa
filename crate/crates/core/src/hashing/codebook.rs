use crate::diffmath::Matrix;
use crate::models::ModelKind;

use super::{HashError, MedianScope, FIXED_THRESHOLD};

/// Bit-packed codes. Bit `i` of a code is latent dimension `i`, stored in
/// word `i / 64` at position `i % 64`; unused high bits are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodebook {
    bits: usize,
    words: usize,
    codes: Vec<u64>,
    ids: Vec<String>,
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn padding_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl BinaryCodebook {
    /// `codes` holds `ids.len()` codes of `⌈bits/64⌉` words each.
    pub fn new(bits: usize, ids: Vec<String>, codes: Vec<u64>) -> Result<Self, HashError> {
        if bits == 0 {
            return Err(HashError::InvalidArgument("codes need at least one bit".into()));
        }
        if ids.is_empty() {
            return Err(HashError::InvalidArgument("codebook has no documents".into()));
        }
        let words = words_for(bits);
        if codes.len() != ids.len() * words {
            return Err(HashError::InvalidArgument(format!(
                "{} words for {} codes of {} words",
                codes.len(),
                ids.len(),
                words
            )));
        }
        let mask = padding_mask(bits);
        if codes.chunks(words).any(|c| c[words - 1] & !mask != 0) {
            return Err(HashError::InvalidArgument("padding bits must be zero".into()));
        }
        Ok(Self { bits, words, codes, ids })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn code(&self, i: usize) -> &[u64] {
        &self.codes[i * self.words..(i + 1) * self.words]
    }

    pub fn bit(&self, doc: usize, i: usize) -> bool {
        self.code(doc)[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u64])> {
        self.ids.iter().map(String::as_str).zip(self.codes.chunks(self.words))
    }

    /// Codes in the order given by `order` (entries index this codebook).
    pub fn select(&self, order: &[usize]) -> Result<Self, HashError> {
        let ids = order.iter().map(|&i| self.ids[i].clone()).collect();
        let codes = order.iter().flat_map(|&i| self.code(i).iter().copied()).collect();
        Self::new(self.bits, ids, codes)
    }
}

/// `bit = value > threshold` per dimension.
pub fn binarize(latents: &Matrix, thresholds: &[f32], ids: Vec<String>) -> Result<BinaryCodebook, HashError> {
    let (n, m) = latents.shape();
    if thresholds.len() != m {
        return Err(HashError::WidthMismatch {
            left: m,
            right: thresholds.len(),
        });
    }
    if ids.len() != n {
        return Err(HashError::InvalidArgument(format!("{} ids for {} latent rows", ids.len(), n)));
    }
    let words = words_for(m);
    let mut codes = vec![0u64; n * words];
    for (r, code) in codes.chunks_mut(words.max(1)).enumerate().take(n) {
        for (i, (&v, &t)) in latents.row(r).iter().zip(thresholds).enumerate() {
            if v > t {
                code[i / 64] |= 1 << (i % 64);
            }
        }
    }
    BinaryCodebook::new(m, ids, codes)
}

/// Lower median of every column.
pub fn median_thresholds(latents: &Matrix) -> Result<Vec<f32>, HashError> {
    let (n, m) = latents.shape();
    if n == 0 {
        return Err(HashError::EmptyDatabase);
    }
    let mut col = vec![0f32; n];
    Ok((0..m)
        .map(|i| {
            for (r, c) in col.iter_mut().enumerate() {
                *c = latents.get(r, i);
            }
            col.sort_by(f32::total_cmp);
            col[(n - 1) / 2]
        })
        .collect())
}

pub fn median_binarize(latents: &Matrix, ids: Vec<String>) -> Result<BinaryCodebook, HashError> {
    binarize(latents, &median_thresholds(latents)?, ids)
}

pub fn fixed_binarize(probs: &Matrix, threshold: f32, ids: Vec<String>) -> Result<BinaryCodebook, HashError> {
    binarize(probs, &vec![threshold; probs.cols()], ids)
}

/// Thresholds used to hash both database and queries: medians for Gaussian
/// models (over the database, or database plus queries for
/// [`MedianScope::Joint`]), 0.5 for Bernoulli ones.
pub fn code_thresholds(
    kind: ModelKind,
    scope: MedianScope,
    db: &Matrix,
    queries: Option<&Matrix>,
) -> Result<Vec<f32>, HashError> {
    if kind.is_bernoulli() {
        return Ok(vec![FIXED_THRESHOLD; db.cols()]);
    }
    match (scope, queries) {
        (MedianScope::Joint, Some(q)) => {
            if q.cols() != db.cols() {
                return Err(HashError::WidthMismatch {
                    left: db.cols(),
                    right: q.cols(),
                });
            }
            let mut data = db.data().to_vec();
            data.extend_from_slice(q.data());
            let all = Matrix::from_vec(db.rows() + q.rows(), db.cols(), data)
                .map_err(|e| HashError::InvalidArgument(e.to_string()))?;
            median_thresholds(&all)
        }
        _ => median_thresholds(db),
    }
}
