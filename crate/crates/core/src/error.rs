use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum UfmError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class count {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("Hadamard order 2^{0} overflows addressable size")]
    SizeOverflow(u32),

    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,

    #[error("spectrum has no singular value above the zero tolerance")]
    ZeroSpectrum,

    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: u64, reason: String },

    #[error("integration step underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("matrix is not rank 2 within tolerance (sigma_3 / sigma_1 = {0})")]
    NotRankTwo(f64),

    #[error("matrix is not positive semidefinite within tolerance")]
    NotPsd,

    #[error("search too large: {0}")]
    SearchTooLarge(String),
}

pub type Result<T> = std::result::Result<T, UfmError>;
