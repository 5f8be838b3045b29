//! Audio prompt adherence scoring.
//!
//! Candidate prompt/stem pairs are fused into embeddings, optionally projected
//! with a whitening PCA, and compared against a matching reference set and a
//! deranged (non-matching) copy of it. The adherence score is the normalized
//! difference of the two distribution distances.

pub mod adherence;
pub mod audio;
pub mod cli;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod projection;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
