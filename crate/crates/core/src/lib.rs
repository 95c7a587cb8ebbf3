//! Multimodal intent classification with out-of-distribution detection.
//!
//! The pipeline covers pseudo-OOD synthesis by Dirichlet mixing of ID
//! embedding sequences, small transformer-style modality encoders, a learned
//! weighted fusion network, a two-stage (binary, then multi-class plus
//! contrastive) training schedule, and six OOD scoring functions evaluated
//! with threshold-sweep metrics.
//!
//! Everything runs in 64-bit floats on the CPU and is deterministic given a
//! seed.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod oodgen;
pub mod scoring;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{RngState, Tensor2};
