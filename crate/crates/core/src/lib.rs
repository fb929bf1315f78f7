//! Property-constrained molecular generation at desk scale.

pub mod chem;
pub mod classifier;
pub mod descriptors;
pub mod embedder;
mod error;
pub mod encoding;
pub mod fingerprints;
pub mod metrics;
pub mod pipeline;
pub mod range_gan;

pub use error::{Error, Result};
