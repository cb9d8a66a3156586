//! Counter-based Gaussian noise.
//!
//! Every draw is addressed by `(seed, replica, tag, particle, step)`, so
//! values do not depend on the number of particles, steps or replicas in the
//! run, nor on the order in which replicas are processed.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

/// Domain-separation tag for the Brownian increments.
pub const NOISE_TAG: u64 = 0;
/// Domain-separation tag for the initial positions.
pub const INIT_TAG: u64 = 1;

/// Source of the standard Gaussian pairs driving the Brownian increments.
pub trait NoiseSource: Sync {
    /// Writes the standard normal pairs of step `step` for every particle of `replica`.
    fn fill(&self, replica: usize, step: usize, out: &mut [Vec2]);
}

/// Identifies the generator behind an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngProvenance {
    pub seed: u64,
    pub generator: String,
    pub noise_tag: u64,
    pub init_tag: u64,
}

impl RngProvenance {
    pub fn chacha(seed: u64) -> Self {
        Self { seed, generator: "chacha8/box-muller".into(), noise_tag: NOISE_TAG, init_tag: INIT_TAG }
    }
}

/// ChaCha8 keyed by `(seed, replica, tag)` with one stream per particle and
/// four 32-bit words per draw.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
    tag: u64,
}

impl CounterRng {
    pub fn new(seed: u64, tag: u64) -> Self {
        Self { seed, tag }
    }

    fn generator(&self, replica: usize, particle: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(replica as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.tag.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(particle as u64);
        rng
    }

    /// Uniform pair `(u1, u2)` with `u1 in (0, 1]`, `u2 in [0, 1)` at position `index`.
    pub fn uniform_pair(&self, replica: usize, particle: usize, index: usize) -> (f64, f64) {
        let mut rng = self.generator(replica, particle);
        rng.set_word_pos(4 * index as u128);
        uniform_pair(&mut rng)
    }

    /// Standard normal pair at position `index`.
    pub fn normal_pair(&self, replica: usize, particle: usize, index: usize) -> Vec2 {
        let (u1, u2) = self.uniform_pair(replica, particle, index);
        box_muller(u1, u2)
    }
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn uniform_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = rng.next_u64() >> 11;
    let b = rng.next_u64() >> 11;
    ((a as f64 + 1.0) * TWO_POW_M53, b as f64 * TWO_POW_M53)
}

#[inline]
fn box_muller(u1: f64, u2: f64) -> Vec2 {
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    [r * c, r * s]
}

/// The default noise: independent standard normal pairs from [`CounterRng`].
#[derive(Debug, Clone, Copy)]
pub struct ChaChaNoise {
    rng: CounterRng,
}

impl ChaChaNoise {
    pub fn new(seed: u64) -> Self {
        Self { rng: CounterRng::new(seed, NOISE_TAG) }
    }
}

impl NoiseSource for ChaChaNoise {
    fn fill(&self, replica: usize, step: usize, out: &mut [Vec2]) {
        for (i, z) in out.iter_mut().enumerate() {
            *z = self.rng.normal_pair(replica, i, step);
        }
    }
}

/// No noise at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&self, _replica: usize, _step: usize, out: &mut [Vec2]) {
        out.fill([0.0, 0.0]);
    }
}

/// Gives particle `2k+1` the negated increment of particle `2k`.
#[derive(Debug, Clone, Copy)]
pub struct MirroredNoise<S>(pub S);

impl<S: NoiseSource> NoiseSource for MirroredNoise<S> {
    fn fill(&self, replica: usize, step: usize, out: &mut [Vec2]) {
        self.0.fill(replica, step, out);
        for pair in out.chunks_exact_mut(2) {
            pair[1] = [-pair[0][0], -pair[0][1]];
        }
    }
}
