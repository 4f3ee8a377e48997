use crate::error::{Result, UfmError};
use crate::linalg::{svd, DenseMatrix};
use crate::model::class_mean_logits;

/// Largest allowed `sigma_3 / sigma_1` for a matrix to count as rank 2.
pub const RANK_TWO_TOL: f64 = 1e-3;

/// Smallest allowed eigenvalue relative to the largest.
pub const PSD_TOL: f64 = 1e-6;

/// Sorted circular gaps, in degrees, between the columns of a rank-2 Gram
/// factor `X` of the class-mean logits (`M ~ X^T X`). The gaps are invariant
/// under the rotation ambiguity of `X` and sum to 360.
///
/// Softmax ignores a constant added to a column of logits, so column means
/// are removed first. Trained logits are only approximately symmetric; `X` is
/// taken from the right singular vectors, i.e. the class feature side.
pub fn gram_factor_angles(z: &DenseMatrix, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !z.cols().is_multiple_of(n) {
        return Err(UfmError::Shape(format!(
            "{} columns do not split into classes of {n}",
            z.cols()
        )));
    }
    let mean = class_mean_logits(z, n);
    let k = mean.rows();
    let col_means: Vec<f64> = (0..mean.cols())
        .map(|j| (0..k).map(|i| mean[(i, j)]).sum::<f64>() / k as f64)
        .collect();
    let centered = DenseMatrix::from_fn(k, mean.cols(), |i, j| mean[(i, j)] - col_means[j]);
    let dec = svd(&centered);
    let s = dec.singular_values.values();
    if s.len() < 2 || s[0] == 0.0 {
        return Err(UfmError::NotRankTwo(f64::NAN));
    }
    let ratio = s.get(2).copied().unwrap_or(0.0) / s[0];
    if ratio > RANK_TWO_TOL {
        return Err(UfmError::NotRankTwo(ratio));
    }
    // for a PSD Gram matrix the left and right singular vectors agree; a
    // negative eigenvalue flips one of them
    for (i, &sigma) in s.iter().enumerate().take(2) {
        let overlap: f64 = (0..k).map(|r| dec.u[(r, i)] * dec.v[(r, i)]).sum();
        if overlap < 0.0 && sigma > PSD_TOL * s[0] {
            return Err(UfmError::NotPsd);
        }
    }
    let mut angles: Vec<f64> = (0..k)
        .map(|c| {
            let x = s[0].sqrt() * dec.v[(c, 0)];
            let y = s[1].sqrt() * dec.v[(c, 1)];
            y.atan2(x).to_degrees().rem_euclid(360.0)
        })
        .collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let mut gaps: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(360.0 - angles[k - 1] + angles[0]);
    gaps.sort_by(|a, b| a.total_cmp(b));
    Ok(gaps)
}
