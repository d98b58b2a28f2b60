//! Kendall's tau-a between two orderings of the same items.

use crate::corpus::Permutation;
use crate::error::{Error, Result};

/// `(concordant - discordant) / (n (n - 1) / 2)` over all item pairs, where
/// a pair is concordant when both orderings place it the same way round.
pub fn kendall_tau(pred: &Permutation, truth: &Permutation) -> Result<f64> {
    let n = pred.len();
    if truth.len() != n {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: n,
        });
    }
    if n < 2 {
        return Err(Error::InvalidConfig("kendall tau needs at least 2 items".into()));
    }
    // Position of every item in the true ordering, read in predicted order.
    let mut rank = vec![0usize; n];
    for (k, &item) in truth.as_slice().iter().enumerate() {
        rank[item] = k;
    }
    let mut seq: Vec<usize> = pred.as_slice().iter().map(|&item| rank[item]).collect();
    let discordant = count_inversions(&mut seq);
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((pairs - 2.0 * discordant as f64) / pairs)
}

/// Merge sort that counts inversions; sorts `v` as a side effect.
fn count_inversions(v: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            inv += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
    inv
}
