//! Dimensionality-reduced subspace method for self-adjoint elliptic
//! eigenvalue problems.
//!
//! A small sin-activated network supplies `M` basis functions. The network is
//! trained against a trace objective, its basis is compressed by proper
//! orthogonal decomposition to a well-conditioned `K`-dimensional basis, and
//! the eigenvalue problem is Galerkin-projected onto that basis and solved as
//! a dense symmetric-definite generalized eigenproblem.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod basisnet;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod pod;
pub mod problems;
pub mod quadrature;
pub mod training;

pub use error::{Error, Result};
