//! Simulation of gradient flow on the deep unconstrained features model with
//! cross-entropy loss, the reduced Hadamard spectral dynamics, and the
//! competing logit geometries (simplex, cross-polytope, K-gon).

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod spectral;

pub use error::{Result, UfmError};
