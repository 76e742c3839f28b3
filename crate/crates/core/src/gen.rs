//! Seeded synthetic datasets.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::code::{tail_mask, CodeStore};
use crate::error::{Error, Result};
use crate::MAX_CODE_BITS;

/// `n` random `p`-bit codes where every bit is set independently with
/// probability `density`. The output depends only on the arguments.
pub fn generate(n: usize, p: u32, density: f64, seed: u64) -> Result<CodeStore> {
    if p == 0 || p > MAX_CODE_BITS {
        return Err(Error::UnsupportedLength(p));
    }
    if !(density > 0.0 && density < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "density must be in (0, 1), got {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stride = (p as usize).div_ceil(64);
    let mask = tail_mask(p);
    let mut words = vec![0u64; n * stride];
    if density == 0.5 {
        for code in words.chunks_exact_mut(stride) {
            for w in code.iter_mut() {
                *w = rng.next_u64();
            }
            code[stride - 1] &= mask;
        }
    } else {
        for code in words.chunks_exact_mut(stride) {
            for i in 0..p {
                if rng.gen_bool(density) {
                    code[(i / 64) as usize] |= 1 << (i % 64);
                }
            }
        }
    }
    CodeStore::from_words(p, words)
}
