use super::{BinaryCodebook, HashError};

/// Popcount of the XOR of two codes of the same word count.
pub fn hamming(a: &[u64], b: &[u64]) -> Result<u32, HashError> {
    if a.len() != b.len() {
        return Err(HashError::WidthMismatch {
            left: a.len() * 64,
            right: b.len() * 64,
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum())
}

/// The `k` database codes nearest to `query`, ordered by distance and then
/// by database index.
pub fn topk(query: &[u64], db: &BinaryCodebook, k: usize) -> Result<Vec<(usize, u32)>, HashError> {
    if db.is_empty() {
        return Err(HashError::EmptyDatabase);
    }
    if query.len() != db.words_per_code() {
        return Err(HashError::WidthMismatch {
            left: query.len() * 64,
            right: db.bits(),
        });
    }
    if k > db.len() {
        return Err(HashError::KTooLarge { k, n: db.len() });
    }
    // Counting sort over the bits+1 possible distances keeps ties in index order.
    let dist: Vec<u32> = (0..db.len())
        .map(|i| query.iter().zip(db.code(i)).map(|(x, y)| (x ^ y).count_ones()).sum())
        .collect();
    let width = query.len() * 64;
    let mut start = vec![0usize; width + 2];
    for &d in &dist {
        start[d as usize + 1] += 1;
    }
    for i in 1..start.len() {
        start[i] += start[i - 1];
    }
    let mut order = vec![0usize; db.len()];
    for (i, &d) in dist.iter().enumerate() {
        let slot = &mut start[d as usize];
        order[*slot] = i;
        *slot += 1;
    }
    Ok(order.into_iter().take(k).map(|i| (i, dist[i])).collect())
}
