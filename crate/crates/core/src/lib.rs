//! Simulation of many-body interference of partially distinguishable bosons.
//!
//! Species-blind operators, Fock-space dynamics, interference measures and
//! symmetry-resolved spectra for multi-species Bose-Hubbard systems.

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod measures;
pub mod operators;
pub mod spectral;
pub mod symmetry;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
