//! Numerical toolkit for the 3-D stochastic wave equation driven by noise
//! that is white in time and correlated in space through a Riesz kernel
//! `phi(x) |x|^-beta`.

pub mod covariance;
pub mod error;
pub mod fit;
pub mod gaussian_exact;
pub mod lattice;
pub mod lemmas;
pub mod quadrature;
pub mod regularity;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod vec3;
pub mod wave_kernel;

pub use error::{Error, Result};
