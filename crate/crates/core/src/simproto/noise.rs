//! Seeded noise sources for the simulator.
//!
//! Every random draw comes from ChaCha8 keyed by `seed_from_u64(seed)` with a
//! fixed stream id per consumer, so that adding draws to one consumer never
//! perturbs another. Normal deviates use the ziggurat sampler of `rand_distr`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream ids handed to [`seeded`].
pub const SURGEON_STREAM: u64 = 1;
pub const MOCAP_STREAM: u64 = 2;

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    Vector3::new(x, y, z)
}

/// First-order low-pass filtered white noise with stationary standard
/// deviation `std` per axis and corner frequency `bandwidth` (Hz).
#[derive(Debug, Clone)]
pub struct BandLimitedNoise {
    std: f64,
    bandwidth: f64,
    state: Vector3<f64>,
}

impl BandLimitedNoise {
    /// Starts from a draw of the stationary distribution.
    pub fn new(std: f64, bandwidth: f64, rng: &mut ChaCha8Rng) -> Self {
        let state = normal3(rng) * std;
        BandLimitedNoise { std, bandwidth, state }
    }

    pub fn value(&self) -> Vector3<f64> {
        self.state
    }

    /// Advances the filter by `dt` seconds.
    pub fn advance(&mut self, dt: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let n = normal3(rng);
        let a = (-2.0 * std::f64::consts::PI * self.bandwidth * dt).exp();
        self.state = self.state * a + n * (self.std * (1.0 - a * a).sqrt());
        self.state
    }
}
