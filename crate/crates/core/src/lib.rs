//! C0 weak Galerkin finite elements for fourth-order problems.
//!
//! The crate covers the whole pipeline: uniform triangulations, the P2
//! Lagrange space, the piecewise-constant discrete weak Laplacian and its
//! parameter-free jump stabilizer, operator assembly (including the C0
//! interior penalty baseline and general tracking measures), a primal-dual
//! active-set solver for the state-constrained optimal control problem, and a
//! one-level overlapping additive Schwarz preconditioner with condition
//! number estimation.

pub mod assembly;
pub mod cholesky;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod krylov;
pub mod measure;
pub mod mesh;
pub mod quadrature;
pub mod schwarz;
pub mod space;
pub mod sparse;
pub mod vi;
pub mod weak_ops;

pub use error::{Error, Result};
