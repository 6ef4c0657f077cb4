//! Collective light scattering and dynamics of dipole-coupled two-level atoms.
//!
//! Units: the single-atom decay rate `Γ = 1` sets frequencies and times, and
//! the resonant wavenumber `k = 1` sets lengths (so `λ = 2π`).

pub mod bands;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod transmission;
pub mod waveguide;

pub use error::{Error, Result};
