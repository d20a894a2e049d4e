//! Portable seeded random stream.
//!
//! Every shuffle, sample, and random pick in the crate goes through
//! [`SeededRng`] so partitions and augmentations are reproducible across
//! implementations. The generator is fully specified here:
//!
//! * Seeding: the 64-bit seed is passed through one SplitMix64 step
//!   (`z += 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ z>>27) * 0x94D049BB133111EB; z ^= z>>31`). A zero result is
//!   replaced by `0x9E3779B97F4A7C15` because xorshift has no zero state.
//! * Output: xorshift64* with shifts (12, 25, 27) and multiplier
//!   `0x2545F4914F6CDD1D`.
//! * `below(n)`: rejection sampling; draws `r` until
//!   `r < u64::MAX - (u64::MAX % n)`, returns `r % n`.
//! * `unit()`: `(next >> 11) * 2^-53`, uniform in `[0, 1)`.
//! * `shuffle`: Fisher-Yates from the last index down, `j = below(i + 1)`.
//! * Derived streams: `derive(seed, key)` seeds with
//!   `splitmix(seed ^ fnv1a64(key))`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step applied to `z`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over the UTF-8 bytes of `key`.
pub fn fnv1a64(key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let s = splitmix64(seed);
        Self {
            state: if s == 0 { GOLDEN } else { s },
        }
    }

    /// Independent stream keyed by a string (record id, cell name, ...).
    pub fn derive(seed: u64, key: &str) -> Self {
        Self::new(seed ^ fnv1a64(key))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let limit = u64::MAX - (u64::MAX % n);
        loop {
            let r = self.next_u64();
            if r < limit {
                return (r % n) as usize;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.below(items.len())])
        }
    }
}
