//! Seeded random streams.
//!
//! Every stochastic component derives its own ChaCha8 stream from
//! `(seed, tag, index)` so results are reproducible bit-for-bit and
//! independent of iteration order across components.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an element index.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let a = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    let b = splitmix64(a ^ tag);
    splitmix64(b ^ index)
}

pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Stream tags, one per stochastic subsystem.
pub mod tags {
    pub const SYNTH_PATIENT: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const MODEL_INIT: u64 = 0x03;
    pub const EPOCH_SHUFFLE: u64 = 0x04;
    pub const TEXT_VARIANT: u64 = 0x05;
    pub const CONTEXT_GATE: u64 = 0x06;
}

/// Standard normal via Box-Muller; two uniforms per call, deterministic.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Poisson sample by Knuth's product-of-uniforms method; fine for small lambda.
pub fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    debug_assert!(lambda >= 0.0);
    if lambda == 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.random::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}
