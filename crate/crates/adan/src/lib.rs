//! Adversarial deep averaging network (ADAN) for cross-lingual text
//! classification, implemented from scratch: averaged word embeddings feed a
//! shared feature extractor with a supervised classifier head and a
//! Wasserstein-critic language scorer trained adversarially, plus the
//! gradient-reversal variant, a synthetic cross-domain benchmark, and
//! distribution diagnostics.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod synth;
pub mod text;
pub mod trainer;

pub use error::{AdanError, Result};
pub use matrix::Matrix;
