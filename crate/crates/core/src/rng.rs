//! Seeded random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 generator keyed by a
//! 64-bit seed and a stream id, so independent consumers (hash families, test
//! inputs, Monte Carlo trials) never share a sequence and parallel work is
//! reproducible regardless of scheduling.

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| gaussian(rng)).collect()
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| gaussian(rng))
}

pub fn gaussian_tensor<R: Rng + ?Sized>(
    rng: &mut R,
    shape: (usize, usize, usize, usize),
) -> Array4<f64> {
    Array4::from_shape_fn(shape, |_| gaussian(rng))
}
