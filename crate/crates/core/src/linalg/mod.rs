//! Dense matrices, Hadamard and simplex constructions, a Jacobi SVD, and the
//! spectral diagnostics used throughout the crate.

mod hadamard;
mod matrix;
mod metrics;
mod svd;

pub use hadamard::{
    log2_exact, simplex_etf, sylvester_hadamard, sylvester_hadamard_closed_form, walsh_sign,
};
pub use matrix::DenseMatrix;
pub use metrics::{
    direction_distance, effective_rank, effective_rank_of, kl_to_uniform, schatten_quasi,
    SCHATTEN_REL_TOL,
};
pub use svd::{singular_values, svd, SingularSpectrum, Svd};
