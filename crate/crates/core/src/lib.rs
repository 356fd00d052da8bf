//! Numerical laboratory for generalized Lelong numbers of positive currents along a
//! linear submanifold `V = {z = 0}` of `C^(k-l) x C^l`.
//!
//! Conventions: `d = ∂ + ∂̄`, `dᶜ = (∂ − ∂̄)/(2πi)`, so `ddᶜ = (i/π)∂∂̄`.

pub mod currents;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod integrate;
pub mod jensen;
pub mod lelong;
pub mod maps;
pub mod tangent;

pub use error::{LabError, Result};
pub use num_complex::Complex64 as C64;
