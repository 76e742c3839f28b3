//! Exact angular (cosine) k-nearest-neighbor search over binary codes.
//!
//! For a query with `z` ones, every code at Hamming distance tuple
//! `(r1, r2)` (bits the query has that the code lacks, bits the code has that
//! the query lacks) sits at the same angle. Search therefore walks tuples in
//! similarity order instead of scoring codes:
//!
//! - [`probing::TupleSequence`] generates the exact tuple order lazily.
//! - [`single::HashIndex`] probes one hash table keyed by the full code, for
//!   short codes.
//! - [`amih::MultiIndex`] splits codes into substrings with one table each
//!   and verifies the pooled candidates, which keeps long-code search
//!   sublinear.
//! - [`scan::linear_scan_knn`] is the exhaustive baseline.
//!
//! ```
//! use amih::{gen, BinaryCode, MultiIndex};
//!
//! let codes = gen::generate(10_000, 64, 0.5, 7).unwrap();
//! let query = codes.code(123);
//! let index = MultiIndex::build_default(codes).unwrap();
//! let (hits, stats) = index.knn(&query, 10).unwrap();
//! assert_eq!(hits[0].similarity, 1.0);
//! assert!(stats.candidates_checked < 10_000);
//! ```

pub mod amih;
pub mod code;
mod error;
pub mod gen;
pub mod io;
pub mod probing;
pub mod scan;
mod search;
pub mod single;
pub mod table;

/// Longest supported code, in bits.
pub const MAX_CODE_BITS: u32 = 4096;

pub use amih::{
    candidate_tuples, default_m, knn_amih, partition, probing_bound, rnn_amih, CandidateTupleSet,
    MultiIndex, SearchScratch, Span,
};
pub use code::{
    bucket_count, compare_sim, cosine_similarity, hamming_tuple, popcount, BinaryCode, CodeStore,
    HammingTuple, SimKey,
};
pub use error::{Error, Result};
pub use io::IndexSnapshot;
pub use probing::{enumerate_bucket_indices, first_anchor, r_hat, second_anchor, TupleSequence};
pub use scan::{linear_scan_knn, oracle_tuple_order};
pub use search::{Neighbor, QueryStats};
pub use single::{build_single, knn_single, rnn_tuple_single, HashIndex};
