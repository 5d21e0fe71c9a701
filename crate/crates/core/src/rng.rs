//! Portable counter-based random streams.
//!
//! Algorithm (fixed so that any implementation can reproduce a seeded run):
//!
//! * `mix(z)` is the SplitMix64 finalizer:
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`
//!   (wrapping arithmetic on u64).
//! * A stream key is `mix(seed ^ fnv1a64(name))`; a child stream of key `k`
//!   named `n` has key `mix(k ^ fnv1a64(n))`, an indexed child `i` has key
//!   `mix(k ^ mix(i + 0x9E3779B97F4A7C15))`.
//! * The `i`-th output (i = 0, 1, ...) of a stream with key `k` is
//!   `mix(k + (i + 1) * 0x9E3779B97F4A7C15)`.
//! * Uniform doubles use the top 53 bits: `(u >> 11) * 2^-53`, in `[0, 1)`.
//! * Integers below `n` use the high half of the 128-bit product `u * n`.
//! * Standard normals use Box–Muller on two consecutive outputs:
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)`.
//! * FNV-1a 64: offset `0xcbf29ce484222325`, prime `0x100000001b3`, over UTF-8 bytes.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A named random stream. Cloning a stream copies its position.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64, name: &str) -> Self {
        Self {
            key: mix(seed ^ fnv1a64(name)),
            counter: 0,
        }
    }

    pub fn child(&self, name: &str) -> Self {
        Self {
            key: mix(self.key ^ fnv1a64(name)),
            counter: 0,
        }
    }

    pub fn indexed(&self, index: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(index.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher–Yates, from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
