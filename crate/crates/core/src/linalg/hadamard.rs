use super::matrix::DenseMatrix;
use crate::error::{Result, UfmError};

/// Largest supported Sylvester order exponent. `2^30 x 2^30` entries would
/// already exceed any addressable buffer, so anything above is rejected.
const MAX_ORDER_EXP: u32 = 30;

/// Sylvester Hadamard matrix of order `2^m`, built by the block recursion
/// `[[H, H], [H, -H]]` starting from `[1]`.
pub fn sylvester_hadamard(m: u32) -> Result<DenseMatrix> {
    let size = checked_order(m)?;
    let mut h = vec![1i8; 1];
    let mut n = 1usize;
    while n < size {
        let mut next = vec![0i8; 4 * n * n];
        let w = 2 * n;
        for i in 0..n {
            for j in 0..n {
                let v = h[i * n + j];
                next[i * w + j] = v;
                next[i * w + j + n] = v;
                next[(i + n) * w + j] = v;
                next[(i + n) * w + j + n] = -v;
            }
        }
        h = next;
        n = w;
    }
    Ok(DenseMatrix::from_fn(size, size, |i, j| f64::from(h[i * size + j])))
}

/// The same matrix from the closed form `(-1)^{popcount(i & j)}`.
pub fn sylvester_hadamard_closed_form(m: u32) -> Result<DenseMatrix> {
    let size = checked_order(m)?;
    Ok(DenseMatrix::from_fn(size, size, walsh_sign))
}

/// `(-1)^{i . j}` with the mod-2 dot product of binary expansions.
#[inline]
pub fn walsh_sign(i: usize, j: usize) -> f64 {
    if (i & j).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Returns `m` with `k = 2^m`, or an error when `k` is not a power of two.
pub fn log2_exact(k: usize) -> Result<u32> {
    if k == 0 || !k.is_power_of_two() {
        return Err(UfmError::NotPowerOfTwo(k));
    }
    Ok(k.trailing_zeros())
}

fn checked_order(m: u32) -> Result<usize> {
    if m > MAX_ORDER_EXP {
        return Err(UfmError::SizeOverflow(m));
    }
    1usize
        .checked_shl(m)
        .filter(|s| s.checked_mul(*s).is_some())
        .ok_or(UfmError::SizeOverflow(m))
}

/// Simplex ETF `S = I_K - (1/K) 1 1^T`.
pub fn simplex_etf(k: usize) -> Result<DenseMatrix> {
    if k < 2 {
        return Err(UfmError::InvalidArgument(format!(
            "simplex ETF needs K >= 2, got {k}"
        )));
    }
    let inv = 1.0 / k as f64;
    Ok(DenseMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0 - inv
        } else {
            -inv
        }
    }))
}
