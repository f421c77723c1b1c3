use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_THERMAL: u64 = 1;
pub(crate) const STREAM_VISUAL: u64 = 2;
pub(crate) const STREAM_DETECT: u64 = 3;
pub(crate) const STREAM_TEXTURE: u64 = 4;
pub(crate) const STREAM_GENERATE: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_seed(seed: u64, frame: u64, purpose: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ frame) ^ purpose.wrapping_mul(0xA24B_AED4_963E_E407))
}

pub(crate) fn stream(seed: u64, frame: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, frame, purpose))
}

/// Stateless hash to a value in [0, 1).
pub(crate) fn hash_unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix(seed ^ splitmix(a.wrapping_mul(0x1000_0000_01B3) ^ b));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Cheap sequential generator for bulk per-pixel noise.
pub(crate) struct XorShift(u64);

impl XorShift {
    pub(crate) fn new(seed: u64) -> Self {
        Self(splitmix(seed) | 1)
    }

    #[inline]
    pub(crate) fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }
}
