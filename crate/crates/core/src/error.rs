use crate::code::HammingTuple;

/// Errors produced by code construction, search and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("code length mismatch: expected {expected} bits, found {found}")]
    LengthMismatch { expected: u32, found: u32 },

    #[error("code length {0} is outside the supported range 1..={max}", max = crate::MAX_CODE_BITS)]
    UnsupportedLength(u32),

    #[error("query has no set bits; cosine similarity is undefined")]
    ZeroNormQuery,

    #[error("tuple {tuple} is not valid for a query with {ones} ones in {bits} bits")]
    InvalidTuple {
        tuple: HammingTuple,
        ones: u32,
        bits: u32,
    },

    #[error("probing bound needs (r1 + r2) / p <= 1/2, got {distance}/{bits}")]
    BoundInapplicable { distance: u32, bits: u32 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
