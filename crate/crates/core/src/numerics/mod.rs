//! Dense linear algebra, stable reductions, seeded sampling, and
//! reverse-mode differentiation.

pub mod gradcheck;
pub mod linalg;
mod reduce;
mod rng;
mod sample;
pub mod tape;
mod tensor;

pub use linalg::{covariance, default_ridge, principal_subspace, regularized_inverse, symmetric_eigen};
pub use reduce::{argmax, l2_normalize, logsumexp, softmax};
pub use rng::RngState;
pub use sample::dirichlet_sample;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{dot, norm, Tensor2};
