//! Exhaustive baselines: linear-scan KNN and the sorted tuple order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::code::{check_same_len, rank_tuples, similarity, BinaryCode, CodeStore, HammingTuple};
use crate::error::{Error, Result};
use crate::search::{check_k, Neighbor};

/// Largest code length [`oracle_tuple_order`] accepts.
pub const ORACLE_MAX_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ranked {
    z: u32,
    tuple: HammingTuple,
    id: u32,
}

impl Ord for Ranked {
    /// Greater is better: higher similarity, then the tuple tie-break, then lower id.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_tuples(self.z, self.tuple, other.tuple).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded heap of the best `k` items seen so far, plus the float score of
/// the worst one so most items can be rejected without exact ranking.
struct TopK<'a> {
    z: u32,
    k: usize,
    heap: BinaryHeap<Reverse<Ranked>>,
    threshold: f64,
    inv_sqrt: &'a [f64],
}

impl TopK<'_> {
    #[inline(never)]
    fn offer(&mut self, id: usize, dot: u32, ones: u32) {
        let entry = Ranked {
            z: self.z,
            tuple: HammingTuple::new(self.z - dot, ones - dot),
            id: id as u32,
        };
        if self.heap.len() < self.k {
            self.heap.push(Reverse(entry));
        } else if entry > self.heap.peek().unwrap().0 {
            self.heap.pop();
            self.heap.push(Reverse(entry));
        } else {
            return;
        }
        if self.heap.len() == self.k {
            let worst = self.heap.peek().unwrap().0;
            let dot = self.z - worst.tuple.r1;
            // slack so float rounding never rejects an exact tie
            self.threshold = dot as f64 * self.inv_sqrt[(dot + worst.tuple.r2) as usize] - 1e-12;
        }
    }
}

/// Exact top-`k` by comparing the query against every code.
///
/// The inner loop scores `dot / sqrt(|b|)` from two popcounts and a table of
/// reciprocal square roots; the query's own norm is constant and dropped.
/// Only items that reach the current k-th score are ranked exactly.
pub fn linear_scan_knn(codes: &CodeStore, q: &BinaryCode, k: usize) -> Result<Vec<Neighbor>> {
    check_k(k)?;
    check_same_len(codes.bits(), q.bits())?;
    let z = q.popcount();
    if z == 0 {
        return Err(Error::ZeroNormQuery);
    }
    let inv_sqrt: Vec<f64> = (0..=codes.bits())
        .map(|v| if v == 0 { 0.0 } else { 1.0 / (v as f64).sqrt() })
        .collect();
    let k = k.min(codes.len());
    let mut top = TopK {
        z,
        k,
        heap: BinaryHeap::with_capacity(k + 1),
        threshold: f64::NEG_INFINITY,
        inv_sqrt: &inv_sqrt,
    };
    let qw = q.words();

    if k > 0 {
        if codes.stride() == 1 {
            let qw = qw[0];
            for (id, &b) in codes.as_words().iter().enumerate() {
                let dot = (qw & b).count_ones();
                let ones = b.count_ones();
                if dot as f64 * inv_sqrt[ones as usize] >= top.threshold {
                    top.offer(id, dot, ones);
                }
            }
        } else {
            for (id, b) in codes.iter().enumerate() {
                let (dot, ones) = qw.iter().zip(b).fold((0, 0), |(d, o), (&x, &y)| {
                    (d + (x & y).count_ones(), o + y.count_ones())
                });
                if dot as f64 * inv_sqrt[ones as usize] >= top.threshold {
                    top.offer(id, dot, ones);
                }
            }
        }
    }

    let mut ranked: Vec<Ranked> = top.heap.into_iter().map(|r| r.0).collect();
    ranked.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ranked
        .into_iter()
        .map(|r| Neighbor {
            id: r.id,
            similarity: similarity(z, r.tuple),
            tuple: r.tuple,
        })
        .collect())
}

/// All valid tuples for `(z, p)`, sorted by similarity (descending), then
/// distance, then `r1`. Exhaustive; restricted to `p <= 24`.
pub fn oracle_tuple_order(z: u32, p: u32) -> Result<Vec<HammingTuple>> {
    if z == 0 {
        return Err(Error::ZeroNormQuery);
    }
    if p > ORACLE_MAX_BITS || z > p {
        return Err(Error::InvalidArgument(format!(
            "oracle order needs 1 <= z <= p <= {ORACLE_MAX_BITS}, got z={z}, p={p}"
        )));
    }
    let mut all: Vec<HammingTuple> = (0..=z)
        .flat_map(|r1| (0..=p - z).map(move |r2| HammingTuple::new(r1, r2)))
        .collect();
    all.sort_by(|a, b| rank_tuples(z, *b, *a));
    Ok(all)
}
