//! Deterministic random numbers.
//!
//! Every stochastic step in the bench (splits, augmentation draws, weight
//! init, occlusion masks) runs off [`RngState`], a SplitMix64 generator with a
//! fixed, documented sequence. Two runs with the same seeds produce the same
//! bytes on any platform, which is what makes experiment reruns comparable.

/// SplitMix64 generator.
///
/// State advances by the 64-bit golden-ratio constant; output is the
/// finalizer from Vigna's reference implementation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` using the top 53 bits, so every value is an exact
    /// multiple of 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`. `lo == hi` is allowed and returns `lo`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, n)`. Plain modulo by design: the tiny bias is
    /// irrelevant here and keeping the draw to one `next_u64` call keeps the
    /// consumed sequence easy to reason about.
    ///
    /// Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() needs a nonempty range");
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle, iterating `i` from `len-1` down to 1 and swapping
    /// with `next_u64() % (i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        if items.len() < 2 {
            return;
        }
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }

    /// Standard normal via Box-Muller. Consumes exactly two draws.
    pub fn next_normal(&mut self) -> f64 {
        // u1 is shifted away from zero so the log stays finite.
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = crate::math::sqrt(-2.0 * crate::math::log(1.0 - u1));
        r * crate::math::cos(2.0 * crate::math::PI * u2)
    }
}

/// FNV-1a over the UTF-8 bytes of `tag` followed by the little-endian bytes
/// of each value in `parts`.
///
/// Used to derive per-run and per-item seeds from a base seed plus stable
/// identifiers, so adding a condition or reordering runs never shifts the
/// random stream of an unrelated run.
pub fn stable_hash64(tag: &str, parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    };
    for b in tag.as_bytes() {
        eat(*b);
    }
    for part in parts {
        for b in part.to_le_bytes() {
            eat(b);
        }
    }
    h
}
