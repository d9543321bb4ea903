//! Direct and inverse spectral transform for simply periodic sinh-Gordon
//! Cauchy data.
//!
//! The crate is organised along the pipeline
//! potential → monodromy → spectral data → asymptotic checks →
//! reconstruction → finite-type projection → Abel-map flows.

pub mod asymptotics;
pub mod cauchy;
pub mod error;
pub mod finitetype;
pub mod io;
pub mod jacobi;
pub mod linalg;
pub mod monodromy;
pub mod nodes;
pub mod ode;
pub mod par;
pub mod potential;
pub mod reconstruct;
pub mod spectral;

pub use error::{Result, SpectralError};
pub use linalg::Mat2;
pub use num_complex::Complex64 as C64;
pub use potential::PeriodicPotential;
