//! Scalable deep subspace clustering with landmark anchors.
//!
//! A small autoencoder maps samples to a latent matrix `Z`. The
//! self-expressive affinity is factorized as `C = PPᵀ` with a
//! column-orthonormal `n×m` projector `P` fitted against `m` landmarks,
//! and spectral clustering runs through `P` in time linear in `n`.
//! Dense closed-form references are provided for checking at small scale.
//!
//! Modules:
//!
//! * [`dataset`] synthetic union-of-subspaces data, file loading, normalization
//! * [`autoencoder`] dense encoder/decoder, losses, backpropagation, Adam
//! * [`self_expression`] least-squares oracle, bounds, landmark factorization and fit
//! * [`spectral`] anchor-graph spectral embedding and k-means
//! * [`metrics`] ACC, NMI, SPE, CONN and the affinity convergence diagnostic
//! * [`pipeline`] config-driven end-to-end runs, benchmarks and bound checks

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod self_expression;
pub mod spectral;

pub use error::{Error, Result};

// Code blocks in the README and the guide run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/self_expression.md")]
    mod self_expression {}
    #[doc = include_str!("../../../book/src/landmarks.md")]
    mod landmarks {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
