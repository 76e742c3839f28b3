//! Single-table exact angular search for short codes.
//!
//! Every code is its own bucket index. A query walks the tuple sequence and
//! reads out each tuple class in full, so results come back in exact ranking
//! order without computing a single similarity during the walk.

use crate::code::{check_same_len, BinaryCode, CodeStore, HammingTuple};
use crate::error::{Error, Result};
use crate::probing::{SmallBuckets, TupleSequence};
use crate::search::{check_k, push_class, Neighbor, QueryStats, Stopwatch};
use crate::table::Postings;

/// Codes longer than this cannot key a single table.
pub const SINGLE_MAX_BITS: u32 = 64;

/// Default widest code that gets a direct-addressed table (`2^bits` slots).
pub const DEFAULT_DENSE_MAX_BITS: u32 = 26;

/// Hash table holding each item under its full code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashIndex {
    codes: CodeStore,
    table: Postings,
}

impl HashIndex {
    pub fn build(codes: CodeStore) -> Result<Self> {
        Self::build_with(codes, DEFAULT_DENSE_MAX_BITS)
    }

    /// Uses direct addressing when the code length is at most `dense_max_bits`.
    pub fn build_with(codes: CodeStore, dense_max_bits: u32) -> Result<Self> {
        let p = codes.bits();
        if p > SINGLE_MAX_BITS {
            return Err(Error::InvalidArgument(format!(
                "single-table index supports codes up to {SINGLE_MAX_BITS} bits, got {p}"
            )));
        }
        let keys: Vec<u64> = codes.iter().map(|w| w[0]).collect();
        let table = Postings::build(&keys, p, p <= dense_max_bits.min(31));
        Ok(Self { codes, table })
    }

    pub(crate) fn from_parts(codes: CodeStore, table: Postings) -> Self {
        Self { codes, table }
    }

    pub fn bits(&self) -> u32 {
        self.codes.bits()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &CodeStore {
        &self.codes
    }

    pub fn table(&self) -> &Postings {
        &self.table
    }

    /// Number of non-empty buckets.
    pub fn bucket_count(&self) -> usize {
        self.table.groups().len()
    }

    pub fn heap_bytes(&self) -> usize {
        self.codes.heap_bytes() + self.table.heap_bytes()
    }

    fn query_key(&self, q: &BinaryCode) -> Result<(u64, u32)> {
        check_same_len(self.bits(), q.bits())?;
        let z = q.popcount();
        if z == 0 {
            return Err(Error::ZeroNormQuery);
        }
        Ok((q.words()[0], z))
    }

    /// Exact top-`k` by cosine similarity.
    pub fn knn(&self, q: &BinaryCode, k: usize) -> Result<(Vec<Neighbor>, QueryStats)> {
        self.knn_budgeted(q, k, None)
    }

    /// As [`HashIndex::knn`], but gives up after `max_probes` bucket lookups,
    /// flagging [`QueryStats::truncated`]. Long codes make the exact walk
    /// astronomically long; the budget keeps measurements finite.
    pub fn knn_budgeted(
        &self,
        q: &BinaryCode,
        k: usize,
        max_probes: Option<u64>,
    ) -> Result<(Vec<Neighbor>, QueryStats)> {
        let start = Stopwatch::start();
        check_k(k)?;
        let (key, z) = self.query_key(q)?;
        let mut stats = QueryStats::default();
        let mut out = Vec::with_capacity(k.min(self.len()));
        let k = k.min(self.len());
        let mut seq = TupleSequence::new(z, self.bits())?;
        let budget = max_probes.unwrap_or(u64::MAX);
        let mut class = Vec::new();
        'walk: while out.len() < k {
            let Some(t) = seq.next() else { break };
            stats.tuples_emitted += 1;
            stats.boundary_tuple = Some(t);
            class.clear();
            for bucket in SmallBuckets::new(key, self.bits(), t) {
                if stats.buckets_probed >= budget {
                    stats.truncated = true;
                    break 'walk;
                }
                stats.buckets_probed += 1;
                class.extend_from_slice(self.table.get(bucket));
            }
            stats.candidates_checked += class.len() as u64;
            if !class.is_empty() {
                push_class(&mut out, &mut class, z, t, k);
            }
        }
        stats.entered_anchor_phase = seq.in_anchor_phase();
        stats.wall_time = start.elapsed();
        Ok((out, stats))
    }

    /// Ids of all items whose tuple from `q` is component-wise within `bound`,
    /// ascending.
    pub fn rnn(&self, q: &BinaryCode, bound: HammingTuple) -> Result<Vec<u32>> {
        check_same_len(self.bits(), q.bits())?;
        let z = q.popcount();
        bound.check_valid(z, self.bits())?;
        let key = q.words()[0];
        let mut ids = Vec::new();
        for r1 in 0..=bound.r1 {
            for r2 in 0..=bound.r2 {
                for bucket in SmallBuckets::new(key, self.bits(), HammingTuple::new(r1, r2)) {
                    ids.extend_from_slice(self.table.get(bucket));
                }
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }
}

/// Builds a single-table index from a list of same-length codes.
pub fn build_single(dataset: &[BinaryCode]) -> Result<HashIndex> {
    HashIndex::build(CodeStore::from_codes(dataset)?)
}

pub fn knn_single(
    index: &HashIndex,
    q: &BinaryCode,
    k: usize,
) -> Result<(Vec<Neighbor>, QueryStats)> {
    index.knn(q, k)
}

pub fn rnn_tuple_single(
    index: &HashIndex,
    q: &BinaryCode,
    bound: HammingTuple,
) -> Result<Vec<u32>> {
    index.rnn(q, bound)
}
