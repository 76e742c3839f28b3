//! Angular multi-index hashing.
//!
//! Codes are cut into `m` disjoint substrings, one hash table per substring.
//! If a code lies within tuple bound `(r1, r2)` of the query then, by
//! pigeonhole, some substring lies within distance `floor((r1 + r2) / m)` of
//! the query's substring, and no substring can exceed `r1` or `r2` in either
//! component. Probing every substring tuple satisfying those three conditions
//! therefore collects a superset of the true near neighbors, which is then
//! verified against the full codes.
//!
//! The KNN driver walks the full-length tuple sequence and, for each tuple,
//! extends the set of probed substring tuples to cover it. Probes and
//! verified candidates are cached in a [`SearchScratch`] for the whole query.

use crate::code::{
    bucket_count, check_same_len, tuple_of_words, BinaryCode, CodeStore, HammingTuple,
};
use crate::error::{Error, Result};
use crate::probing::{SmallBuckets, TupleSequence};
use crate::search::{check_k, push_class, Neighbor, QueryStats, Stopwatch};
use crate::table::{prefetch, Postings};

/// Widest substring a table can key.
pub const MAX_SPAN_BITS: u32 = 64;

/// Contiguous bit range `[offset, offset + width)` of a code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub offset: u32,
    pub width: u32,
}

/// Splits `p` bits into `m` contiguous spans whose widths differ by at most one;
/// the wider spans come first.
pub fn balanced_spans(p: u32, m: u32) -> Result<Vec<Span>> {
    if m == 0 || m > p {
        return Err(Error::InvalidArgument(format!(
            "number of substrings must be in 1..={p}, got {m}"
        )));
    }
    if p.div_ceil(m) > MAX_SPAN_BITS {
        return Err(Error::InvalidArgument(format!(
            "{m} substrings of a {p}-bit code exceed {MAX_SPAN_BITS} bits each"
        )));
    }
    let (base, extra) = (p / m, p % m);
    let mut offset = 0;
    Ok((0..m)
        .map(|s| {
            let width = base + u32::from(s < extra);
            let span = Span { offset, width };
            offset += width;
            span
        })
        .collect())
}

/// Bits `[offset, offset + width)` of a packed code, right-aligned.
#[inline]
pub(crate) fn extract(words: &[u64], span: Span) -> u64 {
    let (w, b) = ((span.offset / 64) as usize, span.offset % 64);
    let mut v = words[w] >> b;
    if b != 0 && b + span.width > 64 {
        v |= words[w + 1] << (64 - b);
    }
    if span.width < 64 {
        v &= (1u64 << span.width) - 1;
    }
    v
}

/// The substring values of `code` under `spans`.
pub fn partition(code: &BinaryCode, spans: &[Span]) -> Vec<u64> {
    spans.iter().map(|&s| extract(code.words(), s)).collect()
}

/// `round(p / log2 n)`, ties to even, clamped so that there is at least one
/// substring, at most `p`, and no substring is wider than 64 bits.
pub fn default_m(p: u32, n: u64) -> u32 {
    let lo = p.div_ceil(MAX_SPAN_BITS).max(1);
    if n < 2 {
        return lo;
    }
    let m = (p as f64 / (n as f64).log2()).round_ties_even();
    (m as u32).clamp(lo, p.max(1))
}

/// Substring tuples that must be probed to answer one `(r1, r2)` query with
/// `m` tables: all `(a, b)` with `a + b <= floor((r1 + r2) / m)`, `a <= r1`,
/// `b <= r2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateTupleSet {
    pub bound: HammingTuple,
    /// Largest substring distance, `floor((r1 + r2) / m)`.
    pub radius: u32,
    /// Members ordered by distance, then `r1`.
    pub tuples: Vec<HammingTuple>,
}

impl CandidateTupleSet {
    pub fn contains(&self, t: HammingTuple) -> bool {
        t.distance() <= self.radius && t.within(self.bound)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

pub fn candidate_tuples(bound: HammingTuple, m: u32) -> Result<CandidateTupleSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let radius = bound.distance() / m;
    let mut tuples = Vec::new();
    for d in 0..=radius {
        for a in 0..=d.min(bound.r1) {
            if d - a <= bound.r2 {
                tuples.push(HammingTuple::new(a, d - a));
            }
        }
    }
    Ok(CandidateTupleSet {
        bound,
        radius,
        tuples,
    })
}

fn binary_entropy(alpha: f64) -> f64 {
    if alpha <= 0.0 || alpha >= 1.0 {
        return 0.0;
    }
    -alpha * alpha.log2() - (1.0 - alpha) * (1.0 - alpha).log2()
}

/// Ceiling on buckets probed by one `(r1, r2)` query:
/// `m * 2^(w * H((r1 + r2) / p))` with `w = ceil(p / m)`. Only valid while
/// `(r1 + r2) / p <= 1/2`.
pub fn probing_bound(p: u32, m: u32, bound: HammingTuple) -> Result<f64> {
    if m == 0 || p == 0 {
        return Err(Error::InvalidArgument("p and m must be positive".into()));
    }
    let d = bound.distance();
    if 2 * d as u64 > p as u64 {
        return Err(Error::BoundInapplicable {
            distance: d,
            bits: p,
        });
    }
    let w = p.div_ceil(m) as f64;
    Ok(m as f64 * (w * binary_entropy(d as f64 / p as f64)).exp2())
}

/// Substring hash tables over a code store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndex {
    codes: CodeStore,
    spans: Vec<Span>,
    tables: Vec<Postings>,
}

/// Direct addressing pays off once there is an item per eight slots; the
/// offset array then costs at most 32 bytes per item.
fn use_dense(width: u32, n: usize) -> bool {
    width <= 26 && (1usize << width) <= 8 * n
}

impl MultiIndex {
    /// Builds with `m` balanced substrings.
    pub fn build(codes: CodeStore, m: u32) -> Result<Self> {
        let spans = balanced_spans(codes.bits(), m)?;
        let tables = spans
            .iter()
            .map(|&span| {
                let keys: Vec<u64> = codes.iter().map(|w| extract(w, span)).collect();
                Postings::build(&keys, span.width, use_dense(span.width, codes.len()))
            })
            .collect();
        Ok(Self {
            codes,
            spans,
            tables,
        })
    }

    /// Builds with [`default_m`] substrings.
    pub fn build_default(codes: CodeStore) -> Result<Self> {
        let m = default_m(codes.bits(), codes.len() as u64);
        Self::build(codes, m)
    }

    pub(crate) fn from_parts(codes: CodeStore, spans: Vec<Span>, tables: Vec<Postings>) -> Self {
        Self {
            codes,
            spans,
            tables,
        }
    }

    pub fn bits(&self) -> u32 {
        self.codes.bits()
    }

    pub fn m(&self) -> u32 {
        self.spans.len() as u32
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn tables(&self) -> &[Postings] {
        &self.tables
    }

    pub fn codes(&self) -> &CodeStore {
        &self.codes
    }

    pub fn heap_bytes(&self) -> usize {
        self.codes.heap_bytes() + self.tables.iter().map(Postings::heap_bytes).sum::<usize>()
    }

    /// Exact top-`k` with a fresh scratch.
    pub fn knn(&self, q: &BinaryCode, k: usize) -> Result<(Vec<Neighbor>, QueryStats)> {
        self.knn_with(q, k, &mut SearchScratch::default())
    }

    /// Exact top-`k`, reusing `scratch` allocations across queries.
    pub fn knn_with(
        &self,
        q: &BinaryCode,
        k: usize,
        scratch: &mut SearchScratch,
    ) -> Result<(Vec<Neighbor>, QueryStats)> {
        let start = Stopwatch::start();
        check_k(k)?;
        check_same_len(self.bits(), q.bits())?;
        if q.popcount() == 0 {
            return Err(Error::ZeroNormQuery);
        }
        scratch.reset(self, q);
        let k = k.min(self.len());
        let mut out = Vec::with_capacity(k);
        let mut seq = TupleSequence::new(scratch.z, self.bits())?;
        let mut stats = QueryStats::default();
        while out.len() < k {
            let Some(t) = seq.next() else { break };
            stats.tuples_emitted += 1;
            stats.boundary_tuple = Some(t);
            scratch.cover(self, t);
            let mut class = std::mem::take(&mut scratch.class);
            class.clear();
            scratch.collect_group(scratch.group_slot(t), &mut class);
            if !class.is_empty() {
                push_class(&mut out, &mut class, scratch.z, t, k);
            }
            scratch.class = class;
        }
        stats.buckets_probed = scratch.buckets_probed;
        stats.candidates_checked = scratch.candidates_checked;
        stats.entered_anchor_phase = seq.in_anchor_phase();
        stats.wall_time = start.elapsed();
        Ok((out, stats))
    }

    /// Ids within tuple bound `bound` of `q`, ascending. Probes already made
    /// for the same query through `scratch` are reused.
    pub fn rnn(
        &self,
        q: &BinaryCode,
        bound: HammingTuple,
        scratch: &mut SearchScratch,
    ) -> Result<Vec<u32>> {
        check_same_len(self.bits(), q.bits())?;
        let z = q.popcount();
        bound.check_valid(z, self.bits())?;
        if scratch.query.as_ref() != Some(q) || scratch.items != self.len() {
            scratch.reset(self, q);
        }
        scratch.cover(self, bound);
        debug_assert!(
            scratch.pool_covers(self, bound),
            "candidate pool misses a neighbor"
        );
        let mut ids = Vec::new();
        for r1 in 0..=bound.r1 {
            for r2 in 0..=bound.r2 {
                scratch.collect_group(scratch.group_slot(HammingTuple::new(r1, r2)), &mut ids);
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }

    /// Number of buckets a fresh [`MultiIndex::rnn`] call probes for `bound`,
    /// computed without touching the tables.
    pub fn probe_volume(&self, q: &BinaryCode, bound: HammingTuple) -> Result<u128> {
        check_same_len(self.bits(), q.bits())?;
        bound.check_valid(q.popcount(), self.bits())?;
        let radius = bound.distance() / self.m();
        let mut total = 0u128;
        for (span, key) in self.spans.iter().zip(partition(q, &self.spans)) {
            let ones = key.count_ones();
            for a in 0..=bound.r1.min(ones).min(radius) {
                for b in 0..=bound.r2.min(span.width - ones).min(radius - a) {
                    total += bucket_count(ones, span.width, HammingTuple::new(a, b))?;
                }
            }
        }
        Ok(total)
    }
}

/// Per-query working state: which substring tuples each table has probed,
/// and every verified candidate grouped by its full tuple.
///
/// One scratch can serve any number of queries, but [`MultiIndex::rnn`]
/// treats a repeated query as a continuation, so do not alternate one
/// scratch between two indexes.
#[derive(Clone, Debug, Default)]
pub struct SearchScratch {
    query: Option<BinaryCode>,
    z: u32,
    stride: usize,
    sub_keys: Vec<u64>,
    sub_ones: Vec<u32>,
    /// Per table, a bitmap over substring tuples `(a, b)`, row length 65.
    probed: Vec<Vec<u64>>,
    /// Bitset over item ids already verified for this query.
    seen: Vec<u64>,
    items: usize,
    /// Verified candidates in discovery order. They are also chained into
    /// one list per full tuple: `heads[slot]` indexes the newest entry and
    /// `next` links each entry to the previous one.
    pool: Vec<u32>,
    next: Vec<u32>,
    heads: Vec<u32>,
    class: Vec<u32>,
    keys: Vec<u64>,
    ranges: Vec<(u32, u32)>,
    fresh: Vec<u32>,
    buckets_probed: u64,
    candidates_checked: u64,
}

const PROBED_ROW: usize = MAX_SPAN_BITS as usize + 1;
const NIL: u32 = u32::MAX;

/// Bucket keys generated per pass, bounding scratch for huge cells.
const KEY_BATCH: usize = 1 << 14;

impl SearchScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, index: &MultiIndex, q: &BinaryCode) {
        let z = q.popcount();
        self.query = Some(q.clone());
        self.z = z;
        self.stride = (index.bits() - z + 1) as usize;
        self.sub_keys = partition(q, &index.spans);
        self.sub_ones = self.sub_keys.iter().map(|k| k.count_ones()).collect();
        self.probed.resize_with(index.spans.len(), Vec::new);
        for bits in &mut self.probed {
            bits.clear();
            bits.resize((PROBED_ROW * PROBED_ROW).div_ceil(64), 0);
        }
        let words = index.len().div_ceil(64);
        if self.seen.len() != words || self.items != index.len() {
            self.seen = vec![0; words];
            self.items = index.len();
        } else if self.pool.len() < words {
            for &id in &self.pool {
                self.seen[id as usize / 64] = 0;
            }
        } else {
            self.seen.fill(0);
        }
        self.heads.clear();
        self.heads.resize((z as usize + 1) * self.stride, NIL);
        self.pool.clear();
        self.next.clear();
        self.buckets_probed = 0;
        self.candidates_checked = 0;
    }

    #[inline]
    fn group_slot(&self, t: HammingTuple) -> usize {
        t.r1 as usize * self.stride + t.r2 as usize
    }

    fn collect_group(&self, slot: usize, out: &mut Vec<u32>) {
        let mut k = self.heads[slot];
        while k != NIL {
            out.push(self.pool[k as usize]);
            k = self.next[k as usize];
        }
    }

    /// Probes every substring tuple needed for `bound` that has not been
    /// probed yet, verifying each new candidate once.
    fn cover(&mut self, index: &MultiIndex, bound: HammingTuple) {
        let radius = bound.distance() / index.m();
        let q = self.query.take().expect("scratch initialized");
        for (s, span) in index.spans.iter().enumerate() {
            let ones = self.sub_ones[s];
            let zeros = span.width - ones;
            for a in 0..=bound.r1.min(ones).min(radius) {
                for b in 0..=bound.r2.min(zeros).min(radius - a) {
                    let cell = a as usize * PROBED_ROW + b as usize;
                    let word = &mut self.probed[s][cell / 64];
                    if *word >> (cell % 64) & 1 == 1 {
                        continue;
                    }
                    *word |= 1 << (cell % 64);
                    // Three passes with independent loads in each, so cache
                    // misses on the tables and the codes overlap.
                    let sub = HammingTuple::new(a, b);
                    let mut stream = SmallBuckets::new(self.sub_keys[s], span.width, sub);
                    loop {
                        self.keys.clear();
                        let more = stream.fill(&mut self.keys, KEY_BATCH);
                        self.buckets_probed += self.keys.len() as u64;
                        let table = &index.tables[s];
                        for &key in &self.keys {
                            table.prefetch(key);
                        }
                        // Keep only the non-empty buckets, without a branch per key.
                        // Buffers only ever grow; the live prefix is tracked locally.
                        if self.ranges.len() < self.keys.len() {
                            self.ranges.resize(self.keys.len(), (0, 0));
                        }
                        let (mut occupied, mut total) = (0, 0);
                        for &key in &self.keys {
                            let (start, end) = table.range(key);
                            prefetch(table.ids().as_ptr().wrapping_add(start as usize));
                            self.ranges[occupied] = (start, end);
                            occupied += (end > start) as usize;
                            total += end - start;
                        }
                        if self.fresh.len() < total as usize {
                            self.fresh.resize(total as usize, 0);
                        }
                        let mut fresh = 0;
                        for &(start, end) in &self.ranges[..occupied] {
                            for &id in &table.ids()[start as usize..end as usize] {
                                let (word, bit) = (id as usize / 64, id % 64);
                                let seen = self.seen[word];
                                self.fresh[fresh] = id;
                                prefetch(index.codes.words_of(id as usize).as_ptr());
                                fresh += (seen >> bit & 1 ^ 1) as usize;
                                self.seen[word] = seen | 1 << bit;
                            }
                        }
                        self.candidates_checked += fresh as u64;
                        self.pool.reserve(fresh);
                        self.next.reserve(fresh);
                        for &id in &self.fresh[..fresh] {
                            let t = if let [qw] = *q.words() {
                                let b = index.codes.as_words()[id as usize];
                                HammingTuple::new((qw & !b).count_ones(), (b & !qw).count_ones())
                            } else {
                                tuple_of_words(q.words(), index.codes.words_of(id as usize))
                            };
                            let slot = t.r1 as usize * self.stride + t.r2 as usize;
                            self.next.push(self.heads[slot]);
                            self.heads[slot] = self.pool.len() as u32;
                            self.pool.push(id);
                        }
                        if !more {
                            break;
                        }
                    }
                }
            }
        }
        self.query = Some(q);
    }

    /// Every candidate pulled from any table for the current query, in
    /// discovery order, before filtering against a bound.
    pub fn pooled(&self) -> &[u32] {
        &self.pool
    }

    /// Distinct buckets probed for the current query so far.
    pub fn buckets_probed(&self) -> u64 {
        self.buckets_probed
    }

    /// Distinct candidates verified for the current query so far.
    pub fn candidates_checked(&self) -> u64 {
        self.candidates_checked
    }

    fn pool_covers(&self, index: &MultiIndex, bound: HammingTuple) -> bool {
        let q = self.query.as_ref().unwrap();
        (0..index.len()).all(|id| {
            !tuple_of_words(q.words(), index.codes.words_of(id)).within(bound)
                || self.seen[id / 64] >> (id % 64) & 1 == 1
        })
    }
}

/// Exact `(r1, r2)`-near neighbor query; see [`MultiIndex::rnn`].
pub fn rnn_amih(
    index: &MultiIndex,
    q: &BinaryCode,
    bound: HammingTuple,
    scratch: &mut SearchScratch,
) -> Result<Vec<u32>> {
    index.rnn(q, bound, scratch)
}

/// Exact angular top-`k`; see [`MultiIndex::knn`].
pub fn knn_amih(
    index: &MultiIndex,
    q: &BinaryCode,
    k: usize,
) -> Result<(Vec<Neighbor>, QueryStats)> {
    index.knn(q, k)
}
