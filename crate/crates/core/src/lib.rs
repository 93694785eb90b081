//! Photon transduction by a driven two-dimensional atom array.
//!
//! Modules follow the computation from geometry to observables:
//! [`lattice`] (orders, plane waves, critical frequencies), [`greens`]
//! (free-space kernels), [`selfenergy`] (Bloch sums of the infinite array),
//! [`smatrix`] (scattering amplitudes and efficiencies), [`finite`]
//! (coupled-dipole solves for finite arrays), [`analysis`] (spectra and lobe
//! widths) and [`io`] (configuration, presets and output formats).

pub mod analysis;
pub mod error;
pub mod finite;
pub mod greens;
pub mod io;
pub mod lattice;
pub mod par;
pub mod quad;
pub mod selfenergy;
pub mod smatrix;

pub use error::{Error, Result};
