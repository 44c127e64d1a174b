//! Pseudo-spectral simulation and numerical certification toolkit for the
//! two-dimensional stochastic modified SQG equation driven by Kraichnan
//! transport noise.

pub mod certificates;
pub mod covariance;
pub mod error;
pub mod heat;
pub mod kernels;
pub mod lattice;
pub mod quadrature;
pub mod radial;
pub mod solver;
pub mod trace;
pub mod uniqueness;

pub use error::{MsqgError, Result};
pub use lattice::{dealiased_product, Lattice, NormKind, SpectralScalarField, SpectralVectorField};
