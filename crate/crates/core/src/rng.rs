//! Counter-based deterministic random streams.
//!
//! Every stochastic draw in the simulator is keyed by (seed, stream tag,
//! element index), so the value a voxel receives does not depend on thread
//! count or visit order. Streams are built by mixing the key through the
//! SplitMix64 finalizer, which is the standard construction for splittable
//! counter-mode generators.

/// Stream tags keep draws for different purposes statistically independent
/// even when they share the same element index.
#[derive(Debug, Clone, Copy)]
pub enum StreamTag {
    TailNoise,
    GranularNoise,
    Deformation,
    PatchSeed,
    Other(u64),
}

impl StreamTag {
    fn value(self) -> u64 {
        match self {
            StreamTag::TailNoise => 0x7441_494c,
            StreamTag::GranularNoise => 0x4752_414e,
            StreamTag::Deformation => 0x4445_464f,
            StreamTag::PatchSeed => 0x5041_5443,
            StreamTag::Other(v) => v,
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index (patch seeds etc.).
pub fn derive_seed(seed: u64, tag: StreamTag, index: u64) -> u64 {
    let mut s = seed;
    let a = splitmix64(&mut s);
    let mut s2 = a ^ tag.value().wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let b = splitmix64(&mut s2);
    let mut s3 = b ^ index;
    splitmix64(&mut s3)
}

/// One deterministic stream. Cheap to construct per voxel.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
}

impl DetRng {
    pub fn new(seed: u64, tag: u64, index: u64) -> Self {
        DetRng {
            state: derive_seed(seed, StreamTag::Other(tag), index),
        }
    }

    pub fn for_element(seed: u64, tag: StreamTag, index: u64) -> Self {
        DetRng {
            state: derive_seed(seed, tag, index),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; never returns 0 so it is safe under `ln`.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        // Modulo bias is irrelevant at our n << 2^64.
        self.next_u64() % n
    }

    /// Standard normal via Box–Muller (one draw per pair; the sine half is
    /// discarded to keep the draw count per sample fixed).
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[inline]
    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }
}
