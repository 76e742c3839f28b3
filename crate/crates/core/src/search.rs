//! Result and statistics types shared by every search engine.

use std::time::Duration;

use crate::code::{similarity, HammingTuple};
use crate::error::{Error, Result};

/// Wall clock for [`QueryStats::wall_time`]. Bare wasm32 has no clock, so
/// there it always reads zero.
pub(crate) struct Stopwatch {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed(&self) -> Duration {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.start.elapsed();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        Duration::ZERO
    }
}

/// One ranked search result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub similarity: f64,
    /// Tuple of the item relative to the query.
    pub tuple: HammingTuple,
}

/// Per-query counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Distinct hash buckets looked up (summed over all tables).
    pub buckets_probed: u64,
    /// Distinct items whose full tuple was examined.
    pub candidates_checked: u64,
    /// Tuples taken from the probing sequence.
    pub tuples_emitted: u64,
    /// Whether the probing sequence went past the monotone ball radius.
    pub entered_anchor_phase: bool,
    /// The last tuple class consumed; items tied with the final result
    /// beyond `k` live in this class.
    pub boundary_tuple: Option<HammingTuple>,
    /// Set when a probe budget stopped the search before `k` results.
    pub truncated: bool,
    pub wall_time: Duration,
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

/// Appends one tuple class (ids sorted ascending) to `out`, stopping at `k`.
/// Returns true once `out` holds `k` results.
pub(crate) fn push_class(
    out: &mut Vec<Neighbor>,
    ids: &mut [u32],
    z: u32,
    tuple: HammingTuple,
    k: usize,
) -> bool {
    ids.sort_unstable();
    let sim = similarity(z, tuple);
    let room = k - out.len();
    out.extend(ids.iter().take(room).map(|&id| Neighbor {
        id,
        similarity: sim,
        tuple,
    }));
    out.len() >= k
}
