//! Counter-based random streams and the elementary samplers built on them.
//!
//! A [`RngStream`] is addressed by `(seed, stream_id)` and a word counter:
//! the `i`-th output of stream `s` is a pure function of `(seed, s, i)`.
//! This is what makes batch sampling deterministic regardless of how work is
//! scheduled across threads. The keystream is ChaCha8: the seed fills the
//! key, the stream id selects the ChaCha stream and the counter is the
//! ChaCha word position.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes. Used to turn human-readable labels into stream ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn mix(stream_id: u64, label: u64) -> u64 {
    splitmix64(stream_id ^ splitmix64(label.rotate_left(17) ^ GOLDEN))
}

/// A deterministic, splittable random stream.
///
/// Streams are values: cloning one duplicates its future output, moving it to
/// another thread is fine, sharing one mutably between threads is not.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut word = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&word.to_le_bytes());
            word = splitmix64(word);
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream positioned at an explicit word counter.
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        let mut s = Self::new(seed, stream_id);
        s.inner.set_word_pos(counter as u128);
        s
    }

    /// Root stream of a named family, e.g. `RngStream::family(7, "direct")`.
    pub fn family(seed: u64, label: &str) -> Self {
        Self::new(seed, fnv1a(label.as_bytes()))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.inner.get_word_pos() as u64
    }

    /// Child stream determined by `label` alone; the parent's position does
    /// not matter and is not advanced.
    pub fn derive(&self, label: u64) -> RngStream {
        RngStream::new(self.seed, mix(self.stream_id, label))
    }

    /// Child stream keyed by a string label.
    pub fn derive_named(&self, label: &str) -> RngStream {
        self.derive(fnv1a(label.as_bytes()))
    }

    /// Fresh child stream; consumes one word of the parent, so repeated
    /// splits yield distinct children.
    pub fn split(&mut self) -> RngStream {
        let word = self.inner.next_u64();
        RngStream::new(self.seed, mix(self.stream_id, word))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Runs `f` on `n` independent streams `root.derive(i)`, in parallel.
/// Output order (and content) does not depend on the thread count.
pub fn par_samples<T, F>(root: &RngStream, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = root.derive(i as u64);
            f(&mut s)
        })
        .collect()
}

/// Fallible variant of [`par_samples`]; returns the first error by index.
pub fn try_par_samples<T, F>(root: &RngStream, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RngStream) -> Result<T> + Sync + Send,
{
    par_samples(root, n, f).into_iter().collect()
}

/// Uniform draw on the open interval (0, 1).
///
/// Uses the top 53 bits of one output word, centered in its cell, so neither
/// endpoint can occur and `ln`/power transforms stay finite.
pub fn sample_uniform(stream: &mut RngStream) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 52) as f64;
    ((stream.next_u64() >> 12) as f64 + 0.5) * SCALE
}

pub fn sample_standard_normal(stream: &mut RngStream) -> f64 {
    StandardNormal.sample(stream)
}

/// Exponential draw with the given rate (mean `1/rate`).
pub fn sample_exponential(rate: f64, stream: &mut RngStream) -> f64 {
    -sample_uniform(stream).ln() / rate
}

/// Shape/rate parameters of the gamma law with density
/// `λ^α / Γ(α) x^{α-1} e^{-λx}` on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    shape: f64,
    rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(invalid(format!("gamma shape must be positive, got {shape}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid(format!("gamma rate must be positive, got {rate}")));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }
}

/// Standard gamma (rate 1) with shape ≥ 1, Marsaglia–Tsang squeeze/rejection.
fn marsaglia_tsang(shape: f64, stream: &mut RngStream) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = sample_standard_normal(stream);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = sample_uniform(stream);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One gamma draw.
///
/// Shapes below one are boosted: draw at shape `α + 1` and multiply by
/// `U^{1/α}`. That is the beta-gamma identity `γ_α = U^{1/α} γ_{α+1}`, the
/// same one [`crate::perpetuity::beta_gamma_identity_samples`] tests
/// statistically. The product is formed in log space so that very small
/// shapes underflow only when the true value does.
pub fn sample_gamma(p: GammaParams, stream: &mut RngStream) -> f64 {
    if p.shape < 1.0 {
        let boosted = marsaglia_tsang(p.shape + 1.0, stream);
        let u = sample_uniform(stream);
        (boosted.ln() + u.ln() / p.shape).exp() / p.rate
    } else {
        marsaglia_tsang(p.shape, stream) / p.rate
    }
}

/// Arrival times of a rate-`rate` Poisson process on `(0, horizon]`,
/// generated from i.i.d. exponential gaps.
pub fn sample_poisson_arrivals(rate: f64, horizon: f64, stream: &mut RngStream) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("arrival rate must be positive, got {rate}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("arrival horizon must be positive, got {horizon}")));
    }
    Ok(arrivals_unchecked(rate, horizon, stream))
}

pub(crate) fn arrivals_unchecked(rate: f64, horizon: f64, stream: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::with_capacity((rate * horizon * 1.2) as usize + 4);
    let mut t = 0.0;
    loop {
        t += sample_exponential(rate, stream);
        if t > horizon {
            return out;
        }
        out.push(t);
    }
}
