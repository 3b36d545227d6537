//! Sharpened PCG iteration bounds for clustered spectra, an instrumented
//! PCG/Lanczos solver to validate them, and a two-level overlapping
//! Schwarz experiment pipeline on high-contrast elliptic problems.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod krylov;
pub mod linalg;
pub mod partition;
pub mod problem;
pub mod schwarz;

pub use error::{Error, Result};
