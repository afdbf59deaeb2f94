//! One-dimensional Schrödinger scattering on compactly supported potentials:
//! forward scattering, Darboux addition and removal of bound states,
//! reconstruction of the transmission coefficient from the reflection ratio,
//! and enumeration of bound-state data consistent with a given ratio.

pub mod darboux;
pub mod dispersion;
pub mod error;
pub mod inverse;
pub mod jost;
pub mod potentials;
pub mod quadrature;

pub use error::{Error, Result};
pub use potentials::{NormReport, PiecewiseConstant, Potential, SampledGrid};
