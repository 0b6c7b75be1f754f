//! Brownian bridges on model Riemannian manifolds.
//!
//! The crate provides exact heat kernels for the generator `(1/2)Δ` on
//! Euclidean space, the circle, the 2-sphere and hyperbolic 3-space, two bridge
//! samplers, Monte Carlo checks of the bridge semimartingale decomposition,
//! grid certificates for the heat kernel bounds, and horizontal lifts of
//! sampled paths to the orthonormal frame bundle.

pub mod bounds;
pub mod bridge;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod heatkernel;
pub mod io;
pub mod lift;
pub mod quadrature;
pub mod rng;
pub mod semimart;
pub mod stats;

pub use error::{Error, Result};
