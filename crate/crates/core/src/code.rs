//! Packed binary codes, Hamming distance tuples and the exact similarity order.
//!
//! For a query `q` with `z` ones, a code `b` at tuple `(r1, r2)` has cosine
//! similarity `(z - r1) / (sqrt(z) * sqrt(z - r1 + r2))`. Every code in the
//! same tuple class has the same similarity, so all ranking work is done on
//! tuples and compared in integer arithmetic.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::MAX_CODE_BITS;

pub(crate) fn words_for(bits: u32) -> usize {
    (bits as usize).div_ceil(64)
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_CODE_BITS {
        return Err(Error::UnsupportedLength(bits));
    }
    Ok(())
}

/// Mask of valid bits in the last word of a `bits`-long code.
pub(crate) fn tail_mask(bits: u32) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A fixed-length bit vector. Bit `i` lives in bit `i % 64` of word `i / 64`;
/// bits past the code length are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    bits: u32,
    words: Vec<u64>,
}

impl BinaryCode {
    pub fn zeros(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self {
            bits,
            words: vec![0; words_for(bits)],
        })
    }

    pub fn ones(bits: u32) -> Result<Self> {
        let mut code = Self::zeros(bits)?;
        code.words.fill(u64::MAX);
        *code.words.last_mut().unwrap() &= tail_mask(bits);
        Ok(code)
    }

    /// Builds a code from packed words, rejecting stray bits past `bits`.
    pub fn from_words(bits: u32, words: Vec<u64>) -> Result<Self> {
        check_bits(bits)?;
        if words.len() != words_for(bits) {
            return Err(Error::InvalidArgument(format!(
                "{bits}-bit code needs {} words, got {}",
                words_for(bits),
                words.len()
            )));
        }
        if words.last().unwrap() & !tail_mask(bits) != 0 {
            return Err(Error::InvalidArgument(format!(
                "bits set past position {bits}"
            )));
        }
        Ok(Self { bits, words })
    }

    pub fn from_u64(bits: u32, value: u64) -> Result<Self> {
        if bits > 64 {
            return Err(Error::UnsupportedLength(bits));
        }
        Self::from_words(bits, vec![value])
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut code = Self::zeros(bits.len() as u32)?;
        for (i, &b) in bits.iter().enumerate() {
            code.set(i as u32, b);
        }
        Ok(code)
    }

    /// Parses a string of `0`/`1` characters; the first character is bit 0.
    pub fn parse_bits(s: &str) -> Result<Self> {
        let bools = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "unexpected character {other:?} in bit string"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bools(&bools)
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: u32) -> bool {
        assert!(
            i < self.bits,
            "bit {i} out of range for {}-bit code",
            self.bits
        );
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: u32, value: bool) {
        assert!(
            i < self.bits,
            "bit {i} out of range for {}-bit code",
            self.bits
        );
        let w = &mut self.words[(i / 64) as usize];
        if value {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    /// The code as a single integer, when it fits in 64 bits.
    pub fn as_u64(&self) -> Option<u64> {
        (self.bits <= 64).then(|| self.words[0])
    }

    pub fn popcount(&self) -> u32 {
        popcount_words(&self.words)
    }
}

impl fmt::Debug for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryCode({self})")
    }
}

impl fmt::Display for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.bits {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn popcount_words(words: &[u64]) -> u32 {
    words.iter().map(|w| w.count_ones()).sum()
}

/// Number of set bits in `code`.
pub fn popcount(code: &BinaryCode) -> u32 {
    code.popcount()
}

/// `(r1, r2)` where `r1` counts positions set in the query but clear in the
/// code, and `r2` counts positions clear in the query but set in the code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HammingTuple {
    pub r1: u32,
    pub r2: u32,
}

impl HammingTuple {
    #[inline]
    pub const fn new(r1: u32, r2: u32) -> Self {
        Self { r1, r2 }
    }

    /// Hamming distance represented by the tuple.
    #[inline]
    pub const fn distance(self) -> u32 {
        self.r1 + self.r2
    }

    /// Whether the tuple can occur for a query with `ones` set bits out of `bits`.
    #[inline]
    pub const fn is_valid(self, ones: u32, bits: u32) -> bool {
        ones <= bits && self.r1 <= ones && self.r2 <= bits - ones
    }

    /// Component-wise `<=`; `a.within(b)` means a code at `a` is a `b`-near neighbor.
    #[inline]
    pub const fn within(self, bound: HammingTuple) -> bool {
        self.r1 <= bound.r1 && self.r2 <= bound.r2
    }

    pub(crate) fn check_valid(self, ones: u32, bits: u32) -> Result<()> {
        if self.is_valid(ones, bits) {
            Ok(())
        } else {
            Err(Error::InvalidTuple {
                tuple: self,
                ones,
                bits,
            })
        }
    }
}

impl fmt::Display for HammingTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.r1, self.r2)
    }
}

impl From<(u32, u32)> for HammingTuple {
    fn from((r1, r2): (u32, u32)) -> Self {
        Self { r1, r2 }
    }
}

#[inline]
pub(crate) fn tuple_of_words(q: &[u64], b: &[u64]) -> HammingTuple {
    let mut r1 = 0;
    let mut r2 = 0;
    for (&qw, &bw) in q.iter().zip(b) {
        r1 += (qw & !bw).count_ones();
        r2 += (!qw & bw).count_ones();
    }
    HammingTuple { r1, r2 }
}

pub(crate) fn check_same_len(expected: u32, found: u32) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Hamming distance tuple of `b` relative to the query `q`.
pub fn hamming_tuple(q: &BinaryCode, b: &BinaryCode) -> Result<HammingTuple> {
    check_same_len(q.bits, b.bits)?;
    Ok(tuple_of_words(&q.words, &b.words))
}

/// Cosine similarity of a code at tuple `t` from a query with `z` ones.
/// Codes with no ones in common with the query (including the zero code)
/// score 0.
#[inline]
pub fn similarity(z: u32, t: HammingTuple) -> f64 {
    let dot = z - t.r1;
    if dot == 0 {
        return 0.0;
    }
    // one correctly rounded sqrt of an exact product keeps identical codes at 1.0
    dot as f64 / ((z as u64 * (dot + t.r2) as u64) as f64).sqrt()
}

/// Cosine similarity between two binary codes; fails for an all-zero query.
pub fn cosine_similarity(q: &BinaryCode, b: &BinaryCode) -> Result<f64> {
    let t = hamming_tuple(q, b)?;
    let z = q.popcount();
    if z == 0 {
        return Err(Error::ZeroNormQuery);
    }
    Ok(similarity(z, t))
}

/// Orders `sim(z, a)` against `sim(z, b)` without floating point.
///
/// Returns `Equal` only when the real similarities coincide. Both tuples
/// must be valid for `z`.
pub fn compare_sim(z: u32, a: HammingTuple, b: HammingTuple) -> Ordering {
    let a_dot = z.saturating_sub(a.r1) as u128;
    let b_dot = z.saturating_sub(b.r1) as u128;
    match (a_dot == 0, b_dot == 0) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => {
            // a_dot / sqrt(a_norm) vs b_dot / sqrt(b_norm), squared and cross-multiplied.
            let a_norm = a_dot + a.r2 as u128;
            let b_norm = b_dot + b.r2 as u128;
            (a_dot * a_dot * b_norm).cmp(&(b_dot * b_dot * a_norm))
        }
    }
}

/// Full ranking order on tuples for a fixed query popcount: higher similarity
/// first, then smaller distance, then smaller `r1`. `Greater` means `a` ranks
/// ahead of `b`.
#[inline]
pub fn rank_tuples(z: u32, a: HammingTuple, b: HammingTuple) -> Ordering {
    compare_sim(z, a, b)
        .then_with(|| b.distance().cmp(&a.distance()))
        .then_with(|| b.r1.cmp(&a.r1))
}

/// A tuple paired with its query popcount, ordered by [`rank_tuples`] so that
/// the greatest key is the most similar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimKey {
    pub z: u32,
    pub tuple: HammingTuple,
}

impl SimKey {
    pub fn new(z: u32, tuple: HammingTuple) -> Self {
        Self { z, tuple }
    }
}

impl Ord for SimKey {
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.z, other.z, "keys from different queries");
        rank_tuples(self.z, self.tuple, other.tuple)
    }
}

impl PartialOrd for SimKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) because acc = C(n, i).
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        match acc.checked_mul(num) {
            Some(v) => acc = v / den,
            None => {
                let g = gcd(acc, den);
                match (acc / g).checked_mul(num / (den / g)) {
                    Some(v) => acc = v,
                    None => return u128::MAX,
                }
            }
        }
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Number of `p`-bit codes at tuple `t` from a query with `z` ones:
/// `C(z, r1) * C(p - z, r2)`, saturating at `u128::MAX`.
pub fn bucket_count(z: u32, p: u32, t: HammingTuple) -> Result<u128> {
    t.check_valid(z, p)?;
    Ok(binomial(z, t.r1).saturating_mul(binomial(p - z, t.r2)))
}

/// Dense row-major store of same-length codes.
#[derive(Clone, PartialEq, Eq)]
pub struct CodeStore {
    bits: u32,
    stride: usize,
    words: Vec<u64>,
}

impl CodeStore {
    pub fn new(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self {
            bits,
            stride: words_for(bits),
            words: Vec::new(),
        })
    }

    pub fn with_capacity(bits: u32, n: usize) -> Result<Self> {
        let mut store = Self::new(bits)?;
        store.words.reserve(n * store.stride);
        Ok(store)
    }

    /// Wraps already-packed words; every record is checked for stray tail bits.
    pub fn from_words(bits: u32, words: Vec<u64>) -> Result<Self> {
        let mut store = Self::new(bits)?;
        if !words.len().is_multiple_of(store.stride) {
            return Err(Error::InvalidArgument(format!(
                "{} words is not a whole number of {bits}-bit codes",
                words.len()
            )));
        }
        let mask = tail_mask(bits);
        if let Some(i) = words
            .chunks_exact(store.stride)
            .position(|c| c[store.stride - 1] & !mask != 0)
        {
            return Err(Error::InvalidArgument(format!(
                "code {i} has bits set past position {bits}"
            )));
        }
        store.words = words;
        Ok(store)
    }

    pub fn from_codes<'a>(codes: impl IntoIterator<Item = &'a BinaryCode>) -> Result<Self> {
        let mut iter = codes.into_iter().peekable();
        let bits = match iter.peek() {
            Some(c) => c.bits,
            None => {
                return Err(Error::InvalidArgument(
                    "cannot infer code length from an empty list".into(),
                ))
            }
        };
        let mut store = Self::new(bits)?;
        for code in iter {
            store.push(code)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, code: &BinaryCode) -> Result<()> {
        check_same_len(self.bits, code.bits)?;
        self.words.extend_from_slice(&code.words);
        Ok(())
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Words per code.
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.words.len() / self.stride
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    #[inline]
    pub fn words_of(&self, id: usize) -> &[u64] {
        &self.words[id * self.stride..(id + 1) * self.stride]
    }

    pub fn code(&self, id: usize) -> BinaryCode {
        BinaryCode {
            bits: self.bits,
            words: self.words_of(id).to_vec(),
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u64]> + '_ {
        self.words.chunks_exact(self.stride)
    }

    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    /// The first `n` codes.
    pub fn prefix(&self, n: usize) -> CodeStore {
        let n = n.min(self.len());
        CodeStore {
            bits: self.bits,
            stride: self.stride,
            words: self.words[..n * self.stride].to_vec(),
        }
    }

    pub fn heap_bytes(&self) -> usize {
        self.words.capacity() * 8
    }
}

impl fmt::Debug for CodeStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CodeStore")
            .field("bits", &self.bits)
            .field("len", &self.len())
            .finish()
    }
}
