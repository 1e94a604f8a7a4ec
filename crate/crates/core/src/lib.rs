//! Numerical laboratory for Schrödinger-adapted harmonic analysis: critical
//! radius functions, Agmon distances, adapted weight classes, maximal
//! operators and explicit kernels on tensor grids.

pub mod agmon;
pub mod critical_radius;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod par;
pub mod potentials;
pub mod quad;
pub mod suites;
pub mod weights;

pub use error::{LabError, Result};
