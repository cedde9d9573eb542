//! Seed derivation and the sampling primitives every stochastic stage uses.
//!
//! A run has one master seed. Each consumer (a tree, a shadow matrix, one
//! LIME instance) asks for its own stream by label, so results never depend
//! on which worker thread happens to run what.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generator behind every seeded stream.
pub type StreamRng = ChaCha8Rng;

/// A master seed plus the label of the stream being derived from it,
/// e.g. `"boruta/iter=3"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedContext {
    pub master_seed: u64,
    pub stream_label: String,
}

impl SeedContext {
    pub fn new(master_seed: u64, stream_label: impl Into<String>) -> Self {
        Self {
            master_seed,
            stream_label: stream_label.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        derive_seed(self.master_seed, &self.stream_label)
    }

    pub fn rng(&self) -> StreamRng {
        rng_from_seed(self.seed())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(master) ^ fnv1a64(label))`.
pub fn derive_seed(master_seed: u64, stream_label: &str) -> u64 {
    splitmix64(splitmix64(master_seed) ^ fnv1a64(stream_label.as_bytes()))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fisher–Yates shuffle of a copy of `values`.
pub fn permute<T: Clone>(values: &[T], seed: u64) -> Vec<T> {
    let mut out = values.to_vec();
    out.shuffle(&mut rng_from_seed(seed));
    out
}

/// Box–Muller standard normal draws on top of a seeded stream. Both variates
/// of each pair are used.
pub struct GaussianSampler<R: Rng> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> GaussianSampler<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so ln(u1) is finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

pub fn sample_gaussian(n: usize, mean: f64, std: f64, seed: u64) -> Result<Vec<f64>> {
    if std.is_nan() || std < 0.0 || !std.is_finite() {
        return Err(Error::param(format!("gaussian std must be >= 0, got {std}")));
    }
    if n == 0 {
        return Err(Error::param("gaussian sample count must be >= 1"));
    }
    if std == 0.0 {
        return Ok(vec![mean; n]);
    }
    let mut sampler = GaussianSampler::new(rng_from_seed(seed));
    Ok((0..n).map(|_| mean + std * sampler.next_standard()).collect())
}
