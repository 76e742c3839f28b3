//! Bucket storage keyed by codes of up to 64 bits.
//!
//! Ids live in one flat array grouped by key; a bucket is a contiguous run
//! of ascending ids. Narrow keys use a direct-addressed offset array, wide
//! keys an open-addressing table with linear probing.

use std::fmt;

/// Hint that `p` will be read soon. A no-op off x86-64.
#[inline(always)]
pub(crate) fn prefetch<T>(p: *const T) {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: prefetch never faults, and SSE is part of the x86-64 baseline.
    unsafe {
        std::arch::x86_64::_mm_prefetch::<{ std::arch::x86_64::_MM_HINT_T0 }>(p.cast())
    };
    #[cfg(not(target_arch = "x86_64"))]
    let _ = p;
}

#[derive(Clone, PartialEq, Eq)]
enum Layout {
    /// Bucket `k` is `ids[offsets[k]..offsets[k + 1]]`.
    Dense(Vec<u32>),
    Sparse(OpenTable),
}

/// One open-addressing slot; `len == 0` marks it empty. Key, start and
/// length share a cache line so a lookup costs one memory access.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Slot {
    key: u64,
    start: u32,
    len: u32,
}

#[derive(Clone, PartialEq, Eq)]
struct OpenTable {
    shift: u32,
    slots: Vec<Slot>,
}

impl OpenTable {
    fn with_groups(groups: usize) -> Self {
        let cap = (groups * 2).next_power_of_two().max(2);
        Self {
            shift: 64 - cap.trailing_zeros(),
            slots: vec![Slot::default(); cap],
        }
    }

    #[inline]
    fn slot(&self, key: u64) -> usize {
        (key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> self.shift) as usize
    }

    fn insert(&mut self, key: u64, start: u32, len: u32) {
        debug_assert!(len > 0);
        let mask = self.slots.len() - 1;
        let mut i = self.slot(key);
        while self.slots[i].len != 0 {
            debug_assert_ne!(self.slots[i].key, key, "duplicate key");
            i = (i + 1) & mask;
        }
        self.slots[i] = Slot { key, start, len };
    }

    #[inline]
    fn find(&self, key: u64) -> Option<(u32, u32)> {
        let mask = self.slots.len() - 1;
        let mut i = self.slot(key);
        loop {
            let s = self.slots[i];
            if s.len == 0 {
                return None;
            }
            if s.key == key {
                return Some((s.start, s.len));
            }
            i = (i + 1) & mask;
        }
    }
}

/// Map from key to the ascending list of ids stored under it.
#[derive(Clone, PartialEq, Eq)]
pub struct Postings {
    width: u32,
    layout: Layout,
    ids: Vec<u32>,
}

impl Postings {
    /// Indexes `keys[id]` for every id. Keys must fit in `width` bits.
    pub fn build(keys: &[u64], width: u32, dense: bool) -> Self {
        debug_assert!(width <= 64);
        debug_assert!(keys.len() < u32::MAX as usize);
        if dense {
            assert!(width < 32, "dense layout needs width < 32, got {width}");
            let mut offsets = vec![0u32; (1usize << width) + 1];
            for &k in keys {
                offsets[k as usize + 1] += 1;
            }
            for i in 1..offsets.len() {
                offsets[i] += offsets[i - 1];
            }
            let mut fill = offsets.clone();
            let mut ids = vec![0u32; keys.len()];
            for (id, &k) in keys.iter().enumerate() {
                let slot = &mut fill[k as usize];
                ids[*slot as usize] = id as u32;
                *slot += 1;
            }
            return Self {
                width,
                layout: Layout::Dense(offsets),
                ids,
            };
        }
        let mut pairs: Vec<(u64, u32)> = keys
            .iter()
            .enumerate()
            .map(|(id, &k)| (k, id as u32))
            .collect();
        pairs.sort_unstable();
        let ids = pairs.iter().map(|&(_, id)| id).collect();
        let mut groups = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let key = pairs[i].0;
            let start = i;
            while i < pairs.len() && pairs[i].0 == key {
                i += 1;
            }
            groups.push((key, start as u32, (i - start) as u32));
        }
        Self::sparse_from_groups(width, groups, ids)
    }

    fn sparse_from_groups(width: u32, groups: Vec<(u64, u32, u32)>, ids: Vec<u32>) -> Self {
        let mut table = OpenTable::with_groups(groups.len());
        for (key, start, len) in groups {
            table.insert(key, start, len);
        }
        Self {
            width,
            layout: Layout::Sparse(table),
            ids,
        }
    }

    /// Rebuilds from `(key, ids)` groups in ascending key order.
    pub fn from_groups(width: u32, dense: bool, keys: &[u64], lens: &[u32], ids: Vec<u32>) -> Self {
        debug_assert_eq!(keys.len(), lens.len());
        if dense {
            assert!(width < 32, "dense layout needs width < 32, got {width}");
            let mut offsets = vec![0u32; (1usize << width) + 1];
            for (&k, &len) in keys.iter().zip(lens) {
                offsets[k as usize + 1] = len;
            }
            for i in 1..offsets.len() {
                offsets[i] += offsets[i - 1];
            }
            return Self {
                width,
                layout: Layout::Dense(offsets),
                ids,
            };
        }
        let mut start = 0u32;
        let groups = keys
            .iter()
            .zip(lens)
            .map(|(&k, &len)| {
                let g = (k, start, len);
                start += len;
                g
            })
            .collect();
        Self::sparse_from_groups(width, groups, ids)
    }

    #[inline]
    pub fn get(&self, key: u64) -> &[u32] {
        let (start, end) = self.range(key);
        &self.ids[start as usize..end as usize]
    }

    /// Bounds of the bucket for `key` within [`Postings::ids`]. Dense
    /// lookups take no branch, so a batch of them overlaps its cache misses.
    #[inline]
    pub fn range(&self, key: u64) -> (u32, u32) {
        match &self.layout {
            Layout::Dense(offsets) => (offsets[key as usize], offsets[key as usize + 1]),
            Layout::Sparse(table) => table.find(key).map_or((0, 0), |(s, len)| (s, s + len)),
        }
    }

    /// Starts loading the slot for `key` into cache.
    #[inline]
    pub fn prefetch(&self, key: u64) {
        match &self.layout {
            Layout::Dense(offsets) => prefetch(&offsets[key as usize]),
            Layout::Sparse(table) => prefetch(&table.slots[table.slot(key)]),
        }
    }

    /// All ids, grouped by key.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.layout, Layout::Dense(_))
    }

    /// Addressable slots: `2^width` when dense, the hash capacity otherwise.
    pub fn slot_count(&self) -> usize {
        match &self.layout {
            Layout::Dense(offsets) => offsets.len() - 1,
            Layout::Sparse(t) => t.slots.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Non-empty buckets as `(key, ids)` in ascending key order.
    pub fn groups(&self) -> Vec<(u64, &[u32])> {
        match &self.layout {
            Layout::Dense(offsets) => offsets
                .windows(2)
                .enumerate()
                .filter(|(_, w)| w[1] > w[0])
                .map(|(k, w)| (k as u64, &self.ids[w[0] as usize..w[1] as usize]))
                .collect(),
            Layout::Sparse(t) => {
                let mut out: Vec<_> = t
                    .slots
                    .iter()
                    .filter(|s| s.len != 0)
                    .map(|s| {
                        (
                            s.key,
                            &self.ids[s.start as usize..(s.start + s.len) as usize],
                        )
                    })
                    .collect();
                out.sort_unstable_by_key(|g| g.0);
                out
            }
        }
    }

    pub fn heap_bytes(&self) -> usize {
        let layout = match &self.layout {
            Layout::Dense(offsets) => offsets.capacity() * 4,
            Layout::Sparse(t) => t.slots.capacity() * std::mem::size_of::<Slot>(),
        };
        layout + self.ids.capacity() * 4
    }
}

impl fmt::Debug for Postings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Postings")
            .field("width", &self.width)
            .field("dense", &self.is_dense())
            .field("ids", &self.ids.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(keys: &[u64], width: u32, dense: bool) {
        let p = Postings::build(keys, width, dense);
        assert_eq!(p.is_dense(), dense);
        for (id, &k) in keys.iter().enumerate() {
            let bucket = p.get(k);
            assert!(bucket.contains(&(id as u32)));
            assert!(bucket.windows(2).all(|w| w[0] < w[1]));
            assert!(bucket.iter().all(|&j| keys[j as usize] == k));
        }
        let total: usize = p.groups().iter().map(|g| g.1.len()).sum();
        assert_eq!(total, keys.len());
        let groups = p.groups();
        let gk: Vec<u64> = groups.iter().map(|g| g.0).collect();
        let gl: Vec<u32> = groups.iter().map(|g| g.1.len() as u32).collect();
        let ids: Vec<u32> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
        let again = Postings::from_groups(width, dense, &gk, &gl, ids);
        assert_eq!(again.groups(), groups);
    }

    #[test]
    fn dense_and_sparse_agree() {
        let keys = [5u64, 3, 5, 0, 7, 3, 3];
        check(&keys, 3, true);
        check(&keys, 3, false);
        let p = Postings::build(&keys, 3, true);
        assert_eq!(p.get(3), &[1, 5, 6]);
        assert_eq!(p.get(1), &[] as &[u32]);
        let p = Postings::build(&keys, 3, false);
        assert_eq!(p.get(3), &[1, 5, 6]);
        assert_eq!(p.get(1), &[] as &[u32]);
    }

    #[test]
    fn wide_keys() {
        let keys = [u64::MAX, 0, 1 << 63, u64::MAX, 12345678901234];
        check(&keys, 64, false);
        let p = Postings::build(&keys, 64, false);
        assert_eq!(p.get(u64::MAX), &[0, 3]);
        assert!(p.get(42).is_empty());
    }

    #[test]
    fn empty() {
        let p = Postings::build(&[], 6, true);
        assert!(p.is_empty());
        assert_eq!(p.slot_count(), 64);
        assert!(p.groups().is_empty());
        let p = Postings::build(&[], 40, false);
        assert!(p.get(9).is_empty());
    }
}
