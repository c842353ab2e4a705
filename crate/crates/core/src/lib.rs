//! Transductive zero-shot learning with pseudo-attribute conditioning.
//!
//! A generator, two gradient-penalty critics and an attribute decoder are
//! trained in two stages on labeled seen-class features and unlabeled
//! unseen-class features. The trained generator synthesizes unseen-class
//! features that train the conventional and generalized classifiers.

pub mod checkpoint;
pub mod classify;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod models;
pub mod ndcore;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
pub use ndcore::Matrix;
