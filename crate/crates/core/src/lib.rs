//! Spectral gradient methods on low-rank matrix factorization.
//!
//! The crate trains factor chains `W_L ⋯ W_1 ≈ Y` with plain gradient descent,
//! spectral descent under the exact orthogonalization `U Vᵀ` or its smoothed
//! form `(MMᵀ + βI)^{-1/2} M`, and Muon-style momentum with Newton–Schulz.
//! Around the optimizers sit the measurements used to study them: core
//! variables in the target's singular frames, product spectra, alignment
//! norms, active sets, effective rank and balancedness drift. Scalar reductions
//! of the flow are integrated separately, and named scenarios bundle runs into
//! reproducible experiments with CSV, JSON and SVG output.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod optimize;
pub mod params;
pub mod problem;
pub mod scalar_ode;

pub use error::{Error, Result};
