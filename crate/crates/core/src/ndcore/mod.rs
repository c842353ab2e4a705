//! Dense matrices, seeded sampling, reverse-mode differentiation and Adam.

mod adam;
mod matrix;
pub mod rng;
mod tape;

pub use adam::{adam_step, AdamState};
pub use matrix::Matrix;
pub use rng::{sample_gaussian, sample_uniform01, SeededRng, Stream};
pub use tape::{Tape, Var};
