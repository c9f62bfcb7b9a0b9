//! Deterministic random streams.
//!
//! Every stochastic choice in the crate (weight init, train/test splits,
//! batch shuffling, dropout masks, synthetic data) draws from an explicitly
//! keyed stream so results are bitwise reproducible and independent of
//! scheduling. Streams are derived from `(seed, purpose, id, round)` keys;
//! two streams with different keys are statistically independent.
//!
//! The generator is xoshiro256++ seeded through a splitmix64 key schedule.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream purpose tags. Keys with distinct tags never collide.
pub mod stream {
    /// Shared-network weight initialization (one per seed).
    pub const INIT: u64 = 1;
    /// Train/test split of one client.
    pub const SPLIT: u64 = 2;
    /// One client's local epoch (shuffling + dropout), per round.
    pub const EPOCH: u64 = 3;
    /// Dropout of the APFL blended-model pass, per client per round.
    pub const APFL_LOCAL: u64 = 4;
    /// Synthetic feature/label generation of one client.
    pub const SYNTH: u64 = 5;
}

/// xoshiro256++ with splitmix64-based key derivation.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seeds a stream directly from a single word.
    pub fn from_seed(seed: u64) -> Self {
        Self::derive(seed, &[])
    }

    /// Derives an independent stream for `(seed, words…)`.
    pub fn derive(seed: u64, words: &[u64]) -> Self {
        let mut h = mix(seed ^ GOLDEN);
        for &w in words {
            h = mix(h ^ w.wrapping_mul(GOLDEN));
        }
        let mut s = [0u64; 4];
        let mut x = h;
        for e in &mut s {
            x = x.wrapping_add(GOLDEN);
            *e = mix(x);
        }
        // xoshiro must not start from the all-zero state
        if s == [0, 0, 0, 0] {
            s[0] = GOLDEN;
        }
        Rng { s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller (two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)` via widening multiply.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
