//! Spectral tools for screw-motion solutions of the localized induction
//! equation bifurcating from a circular vortex filament.

pub mod error;
pub mod frenet;
pub mod lie;
pub mod linear;
pub mod reduction;
pub mod branch;
pub mod spectral;

pub use error::{Error, Result};
pub use frenet::{Curve3, FramePerturbation, ScrewParams};
pub use spectral::{Grid, Parity, ScalarField};
