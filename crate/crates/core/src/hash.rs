//! Stateless 32-bit integer hashing.
//!
//! Every random quantity in the renderer (noise lattice values, per-pixel
//! jitter) is a pure function of integer coordinates pushed through
//! [`mix32`], so results are bit-identical on every platform and need no
//! stored RNG state.

/// Avalanche mixer ("lowbias32", C. Wellons):
///
/// ```text
/// x ^= x >> 16; x *= 0x7feb352d;
/// x ^= x >> 15; x *= 0x846ca68b;
/// x ^= x >> 16;
/// ```
#[inline]
pub fn mix32(mut x: u32) -> u32 {
    x ^= x >> 16;
    x = x.wrapping_mul(0x7feb_352d);
    x ^= x >> 15;
    x = x.wrapping_mul(0x846c_a68b);
    x ^= x >> 16;
    x
}

/// Hash of an ordered sequence of words; each word is folded in with a
/// distinct odd multiplier before remixing so permutations hash differently.
#[inline]
pub fn hash_words(words: &[u32]) -> u32 {
    let mut h = 0x9e37_79b9u32;
    for &w in words {
        h = mix32(h ^ w.wrapping_mul(0x85eb_ca6b)).wrapping_add(0x27d4_eb2f);
    }
    mix32(h)
}

/// Maps a hash to `[0, 1)` using its top 24 bits, so `unit_float(h) * s < s`
/// holds for any finite positive `s`.
#[inline]
pub fn unit_float(h: u32) -> f64 {
    (h >> 8) as f64 * (1.0 / (1u32 << 24) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_float_is_half_open() {
        assert_eq!(unit_float(0), 0.0);
        assert!(unit_float(u32::MAX) < 1.0);
    }

    #[test]
    fn word_order_matters() {
        assert_ne!(hash_words(&[1, 2, 3]), hash_words(&[3, 2, 1]));
        assert_ne!(hash_words(&[0, 1]), hash_words(&[1, 0]));
    }
}
