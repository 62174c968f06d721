//! Numerical core for the quantum Lorentz gas: scattering lengths, random
//! obstacle configurations, point-charge and point-interaction resolvents,
//! microscopic charge densities and the effective-medium limit.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the type
//! aliases at the crate root fix the scalar to `f64`.

pub mod analysis;
pub mod effective;
pub mod field;
pub mod greens;
pub mod linalg;
pub mod microscopic;
pub mod partialwave;
pub mod pointcharge;
pub mod potentials;
pub mod randomfield;
pub mod quadrature;
pub mod real;
pub mod scattering;
pub mod source;
pub mod special;

pub use real::{Point3, Real};

pub type Grid = quadrature::Grid3D<f64>;
pub type Matrix = linalg::Matrix<f64>;
