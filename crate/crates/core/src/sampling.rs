//! Seeded sampling for the refutation checks.
//!
//! Every vector group is drawn uniformly from `[−1, 1]^dim` and multiplied by
//! a per-group scale `10^u`, `u ~ U[−3, 0]`. All dissipation inequalities are
//! homogeneous of degree two, so only the relative sizes of the groups matter;
//! the random scales let the sampler reach configurations where one group
//! dominates the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Vector;

const MIN_DECADE: f64 = -3.0;

pub struct ScaledBoxSampler {
    rng: ChaCha8Rng,
}

impl ScaledBoxSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn scale(&mut self) -> f64 {
        libm::pow(10.0, self.rng.random_range(MIN_DECADE..=0.0))
    }

    /// A box sample with its own random scale.
    pub fn vector(&mut self, dim: usize) -> Vector {
        let s = self.scale();
        Vector::from_fn(dim, |_, _| s * self.rng.random_range(-1.0..=1.0))
    }

    /// A plain `[−1, 1]^dim` sample.
    pub fn unit_box(&mut self, dim: usize) -> Vector {
        Vector::from_fn(dim, |_, _| self.rng.random_range(-1.0..=1.0))
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.rng.random_range(0..len)
    }
}
