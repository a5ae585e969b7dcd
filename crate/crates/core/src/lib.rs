//! Spectral toolkit for commuting tuples of complex matrices.
//!
//! The crate computes joint eigenvalue measures, invariant projections
//! attached to regions of `C^n`, flags ordered by a space-filling curve,
//! Harte and Taylor joint spectra, and a multivariable holomorphic
//! functional calculus with a quadrature cross-check.

pub mod error;
pub mod holocalc;
pub mod hsproj;
pub mod jointspec;
pub mod numcore;
pub mod ordering;
pub mod triangular;
pub mod tuples;

pub use error::{Error, Result};
pub use numcore::{CMatrix, CVector, Subspace, Tolerance, C64};
pub use tuples::{CommPolynomial, CommutingTuple};
