//! Probing order over Hamming distance tuples.
//!
//! [`TupleSequence`] yields every valid tuple for a query popcount `z` and
//! code length `p` in non-increasing cosine similarity. Up to radius
//! [`r_hat`] similarity falls strictly with Hamming distance, so tuples are
//! walked radius by radius (largest `r2` first within a radius). Past that
//! radius a priority queue holds a small frontier: popping a tuple pushes the
//! best tuple one step further out (its first anchor) and the next tuple at
//! the same distance (its second anchor).
//!
//! [`enumerate_bucket_indices`] expands one tuple into the concrete codes
//! (hash bucket indices) it covers.

use std::collections::BinaryHeap;

use crate::code::{binomial, words_for, BinaryCode, HammingTuple, SimKey};
use crate::error::{Error, Result};
use crate::MAX_CODE_BITS;

/// Largest radius `r` with `r * (r + 1) <= z`, i.e. the integer part of the
/// positive root of `r^2 + r - z`.
pub fn r_hat(z: u32) -> u32 {
    let z = z as u64;
    let mut r = (z as f64).sqrt() as u64;
    while r * (r + 1) > z {
        r -= 1;
    }
    while (r + 1) * (r + 2) <= z {
        r += 1;
    }
    r as u32
}

/// Best tuple at distance `x + y + 1`, or `None` past the code length.
pub fn first_anchor(t: HammingTuple, z: u32, p: u32) -> Option<HammingTuple> {
    let d = t.distance() + 1;
    if d > p || z > p {
        return None;
    }
    let c = d.saturating_sub(p - z);
    (c <= z).then(|| HammingTuple::new(c, d - c))
}

/// Next tuple at the same distance, trading one `r2` for one `r1`.
pub fn second_anchor(t: HammingTuple, z: u32, _p: u32) -> Option<HammingTuple> {
    (t.r1 < z && t.r2 >= 1).then(|| HammingTuple::new(t.r1 + 1, t.r2 - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Ball,
    Anchor,
    Done,
}

/// Stateful generator of all valid tuples for `(z, p)` in ranking order.
#[derive(Clone, Debug)]
pub struct TupleSequence {
    z: u32,
    p: u32,
    r_hat: u32,
    phase: Phase,
    entered_anchor: bool,
    radius: u32,
    next_r1: u32,
    queue: BinaryHeap<SimKey>,
    traversed: Vec<u64>,
    emitted: u64,
}

impl TupleSequence {
    pub fn new(z: u32, p: u32) -> Result<Self> {
        if p == 0 || p > MAX_CODE_BITS {
            return Err(Error::UnsupportedLength(p));
        }
        if z > p {
            return Err(Error::InvalidArgument(format!(
                "popcount {z} exceeds code length {p}"
            )));
        }
        let cells = (z as usize + 1) * (p - z + 1) as usize;
        Ok(Self {
            z,
            p,
            r_hat: r_hat(z),
            phase: Phase::Ball,
            entered_anchor: false,
            radius: 0,
            next_r1: 0,
            queue: BinaryHeap::new(),
            traversed: vec![0; cells.div_ceil(64)],
            emitted: 0,
        })
    }

    pub fn for_query(q: &BinaryCode) -> Result<Self> {
        Self::new(q.popcount(), q.bits())
    }

    pub fn z(&self) -> u32 {
        self.z
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn r_hat(&self) -> u32 {
        self.r_hat
    }

    /// True once the sequence has moved past the monotone Hamming ball.
    pub fn in_anchor_phase(&self) -> bool {
        self.entered_anchor
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Number of valid tuples, `(z + 1) * (p - z + 1)`.
    pub fn total(&self) -> u64 {
        (self.z as u64 + 1) * (self.p as u64 - self.z as u64 + 1)
    }

    fn lowest_r1(&self, radius: u32) -> u32 {
        radius.saturating_sub(self.p - self.z)
    }

    fn mark(&mut self, t: HammingTuple) -> bool {
        let i = t.r1 as usize * (self.p - self.z + 1) as usize + t.r2 as usize;
        let (w, b) = (i / 64, i % 64);
        let fresh = self.traversed[w] >> b & 1 == 0;
        self.traversed[w] |= 1 << b;
        fresh
    }

    fn push(&mut self, t: Option<HammingTuple>) {
        if let Some(t) = t {
            if t.is_valid(self.z, self.p) && self.mark(t) {
                self.queue.push(SimKey::new(self.z, t));
            }
        }
    }

    fn next_in_ball(&mut self) -> Option<HammingTuple> {
        while self.radius <= self.r_hat.min(self.p) {
            if self.next_r1 <= self.radius.min(self.z) {
                let t = HammingTuple::new(self.next_r1, self.radius - self.next_r1);
                self.next_r1 += 1;
                return Some(t);
            }
            self.radius += 1;
            self.next_r1 = self.lowest_r1(self.radius);
        }
        None
    }

    fn enter_anchor_phase(&mut self) {
        let start = self.r_hat + 1;
        if start > self.p {
            self.phase = Phase::Done;
            return;
        }
        let c = self.lowest_r1(start);
        self.push(Some(HammingTuple::new(c, start - c)));
        self.phase = Phase::Anchor;
        self.entered_anchor = true;
    }
}

impl Iterator for TupleSequence {
    type Item = HammingTuple;

    fn next(&mut self) -> Option<HammingTuple> {
        if self.phase == Phase::Ball {
            if let Some(t) = self.next_in_ball() {
                self.emitted += 1;
                return Some(t);
            }
            self.enter_anchor_phase();
        }
        if self.phase != Phase::Anchor {
            return None;
        }
        let Some(SimKey { tuple, .. }) = self.queue.pop() else {
            self.phase = Phase::Done;
            return None;
        };
        self.push(first_anchor(tuple, self.z, self.p));
        self.push(second_anchor(tuple, self.z, self.p));
        self.emitted += 1;
        Some(tuple)
    }
}

/// `k`-subsets of `0..n` in lexicographic order.
#[derive(Clone, Debug)]
struct Combination {
    n: u32,
    idx: Vec<u32>,
}

impl Combination {
    fn new(n: u32, k: u32) -> Self {
        debug_assert!(k <= n);
        Self {
            n,
            idx: (0..k).collect(),
        }
    }

    fn reset(&mut self) {
        for (i, v) in self.idx.iter_mut().enumerate() {
            *v = i as u32;
        }
    }

    fn advance(&mut self) -> bool {
        let k = self.idx.len() as u32;
        let Some(i) = (0..k)
            .rev()
            .find(|&i| self.idx[i as usize] < self.n - k + i)
        else {
            return false;
        };
        let i = i as usize;
        self.idx[i] += 1;
        for j in i + 1..k as usize {
            self.idx[j] = self.idx[j - 1] + 1;
        }
        true
    }
}

/// Walks (bits-to-clear, bits-to-set) position choices for one tuple.
/// Clear choices form the outer loop, set choices the inner loop; both run
/// over bit positions in lexicographic order.
#[derive(Clone, Debug)]
struct FlipChoices {
    ones: Vec<u32>,
    zeros: Vec<u32>,
    clear: Combination,
    set: Combination,
    started: bool,
    done: bool,
}

impl FlipChoices {
    fn new(ones: Vec<u32>, zeros: Vec<u32>, t: HammingTuple) -> Self {
        let clear = Combination::new(ones.len() as u32, t.r1);
        let set = Combination::new(zeros.len() as u32, t.r2);
        Self {
            ones,
            zeros,
            clear,
            set,
            started: false,
            done: false,
        }
    }

    fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            self.started = true;
            return true;
        }
        if self.set.advance() {
            return true;
        }
        self.set.reset();
        if self.clear.advance() {
            return true;
        }
        self.done = true;
        false
    }

    fn positions(&self) -> impl Iterator<Item = u32> + '_ {
        let clear = self.clear.idx.iter().map(|&i| self.ones[i as usize]);
        let set = self.set.idx.iter().map(|&i| self.zeros[i as usize]);
        clear.chain(set)
    }
}

fn split_positions(words: &[u64], bits: u32) -> (Vec<u32>, Vec<u32>) {
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for i in 0..bits {
        if words[(i / 64) as usize] >> (i % 64) & 1 == 1 {
            ones.push(i);
        } else {
            zeros.push(i);
        }
    }
    (ones, zeros)
}

/// Lazy stream of every code at tuple `t` from `q`.
#[derive(Clone, Debug)]
pub struct BucketIndices {
    query: BinaryCode,
    choices: FlipChoices,
}

impl Iterator for BucketIndices {
    type Item = BinaryCode;

    fn next(&mut self) -> Option<BinaryCode> {
        if !self.choices.advance() {
            return None;
        }
        let mut words = self.query.words().to_vec();
        for pos in self.choices.positions() {
            words[(pos / 64) as usize] ^= 1 << (pos % 64);
        }
        Some(BinaryCode::from_words(self.query.bits(), words).expect("flips stay in range"))
    }
}

/// Every code obtained from `q` by clearing exactly `r1` of its ones and
/// setting exactly `r2` of its zeros, yielded lazily in a fixed order.
pub fn enumerate_bucket_indices(q: &BinaryCode, t: HammingTuple) -> Result<BucketIndices> {
    t.check_valid(q.popcount(), q.bits())?;
    let (ones, zeros) = split_positions(q.words(), q.bits());
    debug_assert_eq!(words_for(q.bits()), q.words().len());
    Ok(BucketIndices {
        query: q.clone(),
        choices: FlipChoices::new(ones, zeros, t),
    })
}

/// Lazy stream of the `r`-bit submasks of a mask, via Gosper's hack over
/// subset indices (colexicographic order).
#[derive(Clone, Debug)]
struct Submasks {
    positions: [u8; 64],
    first: u128,
    limit: u128,
    x: u128,
}

impl Submasks {
    fn new(within: u64, r: u32) -> Self {
        let mut positions = [0u8; 64];
        let mut n = 0;
        let mut rest = within;
        while rest != 0 {
            positions[n] = rest.trailing_zeros() as u8;
            n += 1;
            rest &= rest - 1;
        }
        debug_assert!(r as usize <= n);
        let first = (1u128 << r) - 1;
        Self {
            positions,
            first,
            limit: 1u128 << n,
            x: first,
        }
    }

    fn restart(&mut self) {
        self.x = self.first;
    }

    #[inline]
    fn next(&mut self) -> Option<u64> {
        let x = self.x;
        if x >= self.limit {
            return None;
        }
        let mut mask = 0u64;
        let mut bits = x as u64;
        while bits != 0 {
            mask |= 1 << self.positions[bits.trailing_zeros() as usize];
            bits &= bits - 1;
        }
        self.x = if x == 0 {
            self.limit
        } else {
            let y = x + (x & x.wrapping_neg());
            ((y ^ x) >> (2 + x.trailing_zeros())) | y
        };
        Some(mask)
    }
}

fn width_mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1 << width) - 1
    }
}

/// Inner choice lists up to this length are computed once and reused.
const CACHED_SET_MASKS: u128 = 1 << 12;

/// The codes of [`BucketIndices`] for keys of at most 64 bits, as raw
/// integers, generated lazily. Same set, different order: clear choices
/// outer, set choices inner, each in colexicographic order.
#[derive(Clone, Debug)]
pub(crate) struct SmallBuckets {
    key: u64,
    clear: Submasks,
    set: Submasks,
    /// Every set choice, when there are few; empty means generate lazily.
    cached: Vec<u64>,
    j: usize,
    base: Option<u64>,
}

impl SmallBuckets {
    /// `t` must be valid for `key`'s popcount within `width` bits.
    pub(crate) fn new(key: u64, width: u32, t: HammingTuple) -> Self {
        debug_assert!(width <= 64);
        debug_assert!(t.is_valid(key.count_ones(), width));
        let zeros = !key & width_mask(width);
        let mut clear = Submasks::new(key, t.r1);
        let mut set = Submasks::new(zeros, t.r2);
        let mut cached = Vec::new();
        if binomial(zeros.count_ones(), t.r2) <= CACHED_SET_MASKS {
            while let Some(m) = set.next() {
                cached.push(m);
            }
        }
        let base = clear.next().map(|c| key ^ c);
        Self {
            key,
            clear,
            set,
            cached,
            j: 0,
            base,
        }
    }

    fn advance_outer(&mut self) {
        self.base = self.clear.next().map(|c| self.key ^ c);
        self.j = 0;
        self.set.restart();
    }

    /// Appends up to `max` more codes to `out`; false once none remain.
    pub(crate) fn fill(&mut self, out: &mut Vec<u64>, max: usize) -> bool {
        let goal = out.len() + max;
        while let Some(base) = self.base {
            if self.cached.is_empty() {
                loop {
                    if out.len() == goal {
                        return true;
                    }
                    match self.set.next() {
                        Some(m) => out.push(base ^ m),
                        None => break,
                    }
                }
            } else {
                let take = (self.cached.len() - self.j).min(goal - out.len());
                out.extend(self.cached[self.j..self.j + take].iter().map(|&m| base ^ m));
                self.j += take;
                if self.j < self.cached.len() {
                    return true;
                }
            }
            self.advance_outer();
        }
        false
    }
}

impl Iterator for SmallBuckets {
    type Item = u64;

    #[inline]
    fn next(&mut self) -> Option<u64> {
        loop {
            let base = self.base?;
            let m = if self.cached.is_empty() {
                self.set.next()
            } else {
                let m = self.cached.get(self.j).copied();
                self.j += 1;
                m
            };
            match m {
                Some(m) => return Some(base ^ m),
                None => self.advance_outer(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{bucket_count, hamming_tuple};

    fn t(r1: u32, r2: u32) -> HammingTuple {
        HammingTuple::new(r1, r2)
    }

    #[test]
    fn r_hat_examples() {
        assert_eq!(r_hat(32), 5);
        assert_eq!(r_hat(0), 0);
        assert_eq!(r_hat(3), 1);
        assert_eq!(r_hat(2), 1);
        assert_eq!(r_hat(6), 2);
        assert_eq!(r_hat(5), 1);
        for z in 0..5000u32 {
            let r = r_hat(z);
            assert!(r * (r + 1) <= z && (r + 1) * (r + 2) > z, "z={z}");
        }
    }

    #[test]
    fn anchor_examples() {
        assert_eq!(first_anchor(t(1, 4), 10, 32), Some(t(0, 6)));
        assert_eq!(second_anchor(t(1, 4), 10, 32), Some(t(2, 3)));
        assert_eq!(first_anchor(t(1, 2), 3, 6), Some(t(1, 3)));
        assert_eq!(first_anchor(t(3, 3), 3, 6), None);
        assert_eq!(second_anchor(t(5, 0), 9, 20), None);
        assert_eq!(second_anchor(t(3, 2), 3, 6), None);
    }

    #[test]
    fn sequence_prefix_z3_p6() {
        let seq: Vec<_> = TupleSequence::new(3, 6).unwrap().collect();
        assert_eq!(
            &seq[..6],
            &[t(0, 0), t(0, 1), t(1, 0), t(0, 2), t(0, 3), t(1, 1)]
        );
        assert_eq!(seq, crate::scan::oracle_tuple_order(3, 6).unwrap());
        assert_eq!(seq.len(), 16);
        let mut sorted = seq.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 16);
    }

    #[test]
    fn all_ones_query_walks_r1() {
        let seq: Vec<_> = TupleSequence::new(9, 9).unwrap().collect();
        let expected: Vec<_> = (0..=9).map(|r| t(r, 0)).collect();
        assert_eq!(seq, expected);
    }

    #[test]
    fn anchor_phase_flag() {
        let mut seq = TupleSequence::new(3, 6).unwrap();
        for _ in 0..3 {
            seq.next();
        }
        assert!(!seq.in_anchor_phase());
        seq.next();
        assert!(seq.in_anchor_phase());
        // z = 2, p = 2: r_hat = 1 and radius 2 is the last one
        let mut seq = TupleSequence::new(2, 2).unwrap();
        assert_eq!(seq.by_ref().take(2).count(), 2);
        assert!(!seq.in_anchor_phase());
        assert_eq!(seq.next(), Some(t(2, 0)));
        assert!(seq.in_anchor_phase());
        // r_hat(2) = 1, one anchor-phase tuple remains
        let mut seq = TupleSequence::new(2, 2).unwrap();
        assert_eq!(seq.by_ref().count(), 3);
        assert_eq!(seq.emitted(), 3);
        assert!(TupleSequence::new(6, 2).is_err());
    }

    #[test]
    fn zero_popcount_sequence_is_complete() {
        let seq: Vec<_> = TupleSequence::new(0, 7).unwrap().collect();
        assert_eq!(seq, (0..=7).map(|r| t(0, r)).collect::<Vec<_>>());
    }

    #[test]
    fn bucket_examples() {
        let q = BinaryCode::parse_bits("111000").unwrap();
        let v: Vec<_> = enumerate_bucket_indices(&q, t(0, 0)).unwrap().collect();
        assert_eq!(v, vec![q.clone()]);
        let v: Vec<_> = enumerate_bucket_indices(&q, t(2, 3)).unwrap().collect();
        assert_eq!(v.len(), 3);
        for c in &v {
            assert_eq!(hamming_tuple(&q, c).unwrap(), t(2, 3));
        }
        let v: Vec<_> = enumerate_bucket_indices(&q, t(0, 3)).unwrap().collect();
        assert_eq!(v, vec![BinaryCode::parse_bits("111111").unwrap()]);
        assert!(enumerate_bucket_indices(&q, t(0, 4)).is_err());
    }

    #[test]
    fn bucket_order_is_lexicographic() {
        let q = BinaryCode::parse_bits("1100").unwrap();
        let v: Vec<String> = enumerate_bucket_indices(&q, t(1, 1))
            .unwrap()
            .map(|c| c.to_string())
            .collect();
        // clear bit 0 then set 2, set 3; clear bit 1 then set 2, set 3
        assert_eq!(v, ["0110", "0101", "1010", "1001"]);
    }

    #[test]
    fn small_buckets_match_generic() {
        let q = BinaryCode::parse_bits("1011001110").unwrap();
        let z = q.popcount();
        for r1 in 0..=z {
            for r2 in 0..=10 - z {
                let generic: Vec<u64> = enumerate_bucket_indices(&q, t(r1, r2))
                    .unwrap()
                    .map(|c| c.as_u64().unwrap())
                    .collect();
                let mut small: Vec<u64> =
                    SmallBuckets::new(q.as_u64().unwrap(), 10, t(r1, r2)).collect();
                let mut drained = vec![7];
                let mut stream = SmallBuckets::new(q.as_u64().unwrap(), 10, t(r1, r2));
                while stream.fill(&mut drained, 3) {}
                assert_eq!(drained[1..], small[..]);
                small.sort_unstable();
                let mut generic = generic;
                generic.sort_unstable();
                assert_eq!(generic, small);
                assert_eq!(small.len() as u128, bucket_count(z, 10, t(r1, r2)).unwrap());
            }
        }
    }

    #[test]
    fn full_width_keys() {
        let key = u64::MAX ^ 1;
        let v: Vec<u64> = SmallBuckets::new(key, 64, t(0, 1)).collect();
        assert_eq!(v, vec![u64::MAX]);
        assert_eq!(SmallBuckets::new(key, 64, t(1, 0)).count(), 63);
        assert_eq!(
            SmallBuckets::new(u64::MAX, 64, t(64, 0)).collect::<Vec<_>>(),
            vec![0]
        );
        assert_eq!(
            SmallBuckets::new(0, 64, t(0, 64)).collect::<Vec<_>>(),
            vec![u64::MAX]
        );
        assert_eq!(SmallBuckets::new(0, 64, t(0, 2)).count(), 2016);
        let mut keys = Vec::new();
        assert!(!SmallBuckets::new(1 << 63, 64, t(1, 63)).fill(&mut keys, 10));
        assert_eq!(keys, vec![u64::MAX >> 1]);
        // lazily generated inner choices: C(40, 20) is far too many to list
        let mut huge = SmallBuckets::new(0, 40, t(0, 20));
        assert!(huge.fill(&mut keys, 1000));
        assert_eq!(keys.len(), 1001);
        assert!(keys[1..]
            .iter()
            .all(|k| k.count_ones() == 20 && *k < 1 << 40));
        assert_eq!(huge.take(5).count(), 5);
    }
}
