//! Beam search over sentence orderings.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::PairTable;

#[derive(Debug, Clone)]
struct Hypothesis {
    order: Vec<usize>,
    used: Vec<bool>,
    score: f64,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.order.cmp(&b.order))
}

/// Orders all sentences of `table` starting from `first`.
///
/// A prefix is scored by the running sum of pair scores over
/// `START, prefix...`; the END pair is added once the ordering is complete.
/// Each step keeps the `beam_width` best prefixes, breaking score ties by the
/// lexicographically smaller index sequence.
pub fn beam_search(table: &PairTable, first: usize, beam_width: usize) -> Result<Vec<usize>> {
    let n = table.sentences();
    if first >= n {
        return Err(Error::InvalidConfig(format!(
            "first sentence index {first} out of range for {n} sentences"
        )));
    }
    if beam_width == 0 {
        return Err(Error::InvalidConfig("beam width must be at least 1".into()));
    }
    let end = n + 1;
    let mut used = vec![false; n];
    used[first] = true;
    let mut score = table.pair(0, first + 1);
    if n == 1 {
        score += table.pair(first + 1, end);
    }
    let mut beam = vec![Hypothesis {
        order: vec![first],
        used,
        score,
    }];

    for depth in 1..n {
        let mut next = Vec::with_capacity(beam.len() * (n - depth));
        for hyp in &beam {
            let last = *hyp.order.last().expect("non-empty prefix") + 1;
            for j in (0..n).filter(|&j| !hyp.used[j]) {
                let mut score = hyp.score + table.pair(last, j + 1);
                if depth + 1 == n {
                    score += table.pair(j + 1, end);
                }
                let mut order = hyp.order.clone();
                order.push(j);
                let mut used = hyp.used.clone();
                used[j] = true;
                next.push(Hypothesis { order, used, score });
            }
        }
        next.sort_by(rank);
        next.truncate(beam_width);
        beam = next;
    }
    Ok(beam.swap_remove(0).order)
}
