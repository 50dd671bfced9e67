//! Discrete jump-diffusion Dirichlet forms on finite metric measure spaces:
//! heat kernels, functional inequalities, envelope fits and Harnack checks.

pub mod config;
pub mod envelopes;
pub mod error;
pub mod form;
pub mod functionals;
pub mod harnack;
pub mod linalg;
pub mod render;
pub mod report;
pub mod scales;
pub mod space;
pub mod suite;

pub use error::{Error, Result};
