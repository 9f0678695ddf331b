//! Seeded weight initialization.
//!
//! Every parameter draws from its own stream keyed by `(seed, name)`, so a
//! parameter's initial value does not depend on which other parameters a
//! model happens to contain. Two models built from the same seed share
//! identical values for every parameter name they have in common.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::fnv1a64;
use crate::tensor::Tensor;
use crate::Real;

pub fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()))
}

/// Uniform on `[-bound, bound]`.
pub fn uniform(shape: &[usize], bound: Real, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..=1.0) * bound)
}

/// Fan-in scaled uniform with variance `1/fan_in`.
pub fn fan_in(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor {
    let bound = (3.0 / fan_in.max(1) as Real).sqrt();
    uniform(shape, bound, &mut rng_for(seed, name))
}

/// Identity matrix `n×n`.
pub fn eye(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
}
