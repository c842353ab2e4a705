//! Seeded sampling.
//!
//! Every random draw in the crate goes through [`SeededRng`], a ChaCha8
//! stream cipher generator. ChaCha output is specified bit-for-bit, so a
//! given `(seed, stream)` pair yields the same sequence on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;
use crate::error::{Error, Result};

/// Independent streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 0,
    Stage1 = 1,
    Stage2 = 2,
    Classifier = 3,
    Synthesis = 4,
    Init = 5,
    Map = 6,
    SeenExpert = 7,
    SeenSynthesis = 8,
}

#[derive(Clone, Debug)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_stream(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        SeededRng(rng)
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.0);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.random()
    }
}

/// `n x dim` matrix of i.i.d. standard normal draws.
pub fn sample_gaussian(n: usize, dim: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid(format!(
            "gaussian sample needs n >= 1 and dim >= 1, got {n}x{dim}"
        )));
    }
    let data = (0..n * dim).map(|_| rng.normal()).collect();
    Matrix::from_vec(n, dim, data)
}

/// `n` uniform draws in `[0, 1)`.
pub fn sample_uniform01(n: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("uniform sample needs n >= 1"));
    }
    Ok((0..n).map(|_| rng.uniform()).collect())
}
