//! Scalar diagnostics over spectra and matrices.

use super::matrix::DenseMatrix;
use super::svd::SingularSpectrum;
use crate::error::{Result, UfmError};

/// Relative cutoff below which a singular value counts as zero in
/// [`schatten_quasi`]. Exactly rank-deficient inputs leave Jacobi residues of
/// order `1e-16 * sigma_1`, which would otherwise contribute `sigma^p` with
/// small `p` far above rounding level.
pub const SCHATTEN_REL_TOL: f64 = 1e-9;

/// Exponential of the Shannon entropy of the normalized singular values that
/// exceed `zero_tol`.
pub fn effective_rank(spectrum: &SingularSpectrum, zero_tol: f64) -> Result<f64> {
    let total: f64 = spectrum.nonzero(zero_tol).sum();
    if total <= 0.0 || spectrum.rank(zero_tol) == 0 {
        return Err(UfmError::ZeroSpectrum);
    }
    let entropy: f64 = spectrum
        .nonzero(zero_tol)
        .map(|s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

/// Effective rank of `values` treated as an (unsorted) spectrum, using the
/// default `1e-12 * max` cutoff.
pub fn effective_rank_of(values: &[f64]) -> Result<f64> {
    let spectrum = SingularSpectrum::from_unsorted(values.to_vec())?;
    let tol = spectrum.default_zero_tol();
    effective_rank(&spectrum, tol)
}

/// `sum sigma_i^p` over the nonzero singular values.
pub fn schatten_quasi(spectrum: &SingularSpectrum, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(UfmError::InvalidArgument(format!(
            "Schatten exponent must be positive, got {p}"
        )));
    }
    let tol = SCHATTEN_REL_TOL * spectrum.largest();
    Ok(spectrum.nonzero(tol).map(|s| s.powf(p)).sum())
}

/// KL divergence from the uniform distribution on `len` modes to `a_hat`:
/// `-log(len) - mean(log a_hat_i)`. Returns `+inf` when any entry is zero.
pub fn kl_to_uniform(a_hat: &[f64]) -> Result<f64> {
    if a_hat.is_empty() {
        return Err(UfmError::InvalidArgument("empty distribution".into()));
    }
    if let Some((index, &value)) = a_hat.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(UfmError::NegativeEntry { index, value });
    }
    let sum: f64 = a_hat.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(UfmError::InvalidArgument(format!(
            "distribution sums to {sum}, expected 1"
        )));
    }
    if a_hat.contains(&0.0) {
        return Ok(f64::INFINITY);
    }
    let m = a_hat.len() as f64;
    let mean_log = a_hat.iter().map(|x| x.ln()).sum::<f64>() / m;
    Ok(-m.ln() - mean_log)
}

/// `|| A/||A||_F - B/||B||_F ||_F^2`, in `[0, 4]`.
pub fn direction_distance(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(UfmError::Shape(format!(
            "direction distance between {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    if na == 0.0 || nb == 0.0 {
        return Err(UfmError::ZeroMatrix);
    }
    // ||a^ - b^||^2 = 2 - 2 <a^, b^>
    let cos = a.frobenius_dot(b) / (na * nb);
    Ok((2.0 - 2.0 * cos).clamp(0.0, 4.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hadamard::simplex_etf;
    use crate::linalg::svd::singular_values;

    fn spec(v: &[f64]) -> SingularSpectrum {
        SingularSpectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn effective_rank_examples() {
        let r = effective_rank(&spec(&[3.0, 3.0, 3.0, 0.0, 0.0]), 1e-12).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
        assert!((effective_rank(&spec(&[5.0, 0.0]), 1e-12).unwrap() - 1.0).abs() < 1e-15);
        // p = (1/2, 1/4, 1/4): H = (1/2) ln 2 + (1/2) ln 4 = (3/2) ln 2
        let r = effective_rank(&spec(&[2.0, 1.0, 1.0]), 1e-12).unwrap();
        assert!((r - 2.0f64.powf(1.5)).abs() < 1e-12);
        assert!((r - 2.828_427_124_746_19).abs() < 1e-12);
        assert_eq!(
            effective_rank(&spec(&[0.0, 0.0]), 1e-12),
            Err(UfmError::ZeroSpectrum)
        );
    }

    #[test]
    fn schatten_examples() {
        assert!((schatten_quasi(&spec(&[1.0; 5]), 0.3).unwrap() - 5.0).abs() < 1e-14);
        assert!((schatten_quasi(&spec(&[4.0]), 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(schatten_quasi(&spec(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn schatten_p2_is_squared_frobenius() {
        let a = DenseMatrix::from_fn(4, 6, |i, j| ((i + 2 * j) % 3) as f64 - 0.4 * i as f64);
        let s = singular_values(&a);
        let fro2 = a.frobenius_norm().powi(2);
        assert!((schatten_quasi(&s, 2.0).unwrap() - fro2).abs() < 1e-12 * fro2);
    }

    #[test]
    fn simplex_schatten_matches_closed_form() {
        // spectrum of S (x) 1_n^T is sqrt(n) on K-1 modes
        for (k, n, l) in [(4usize, 3usize, 2usize), (6, 1, 3), (5, 5, 1)] {
            let z = simplex_etf(k).unwrap().kron_ones(n);
            let p = 2.0 / (l as f64 + 1.0);
            let got = schatten_quasi(&singular_values(&z), p).unwrap();
            let want = (k as f64 - 1.0) * (n as f64).powf(1.0 / (l as f64 + 1.0));
            assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn kl_examples() {
        assert!(kl_to_uniform(&[0.25; 4]).unwrap().abs() < 1e-15);
        assert_eq!(kl_to_uniform(&[0.5, 0.5, 0.0]).unwrap(), f64::INFINITY);
        // -ln 2 - (ln 0.75 + ln 0.25)/2
        let want = -(2f64.ln()) - 0.5 * (0.75f64.ln() + 0.25f64.ln());
        let got = kl_to_uniform(&[0.75, 0.25]).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.143_841_036_225_890_3).abs() < 1e-12);
        assert!(matches!(
            kl_to_uniform(&[1.5, -0.5]),
            Err(UfmError::NegativeEntry { index: 1, .. })
        ));
        assert!(kl_to_uniform(&[0.3, 0.3]).is_err());
    }

    #[test]
    fn direction_distance_examples() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, -1.0]]);
        assert!(direction_distance(&b.scale(3.5), &b).unwrap() < 1e-15);
        assert!((direction_distance(&b.scale(-1.0), &b).unwrap() - 4.0).abs() < 1e-15);
        let a = DenseMatrix::from_rows(&[[2.0, -1.0], [0.0, 0.0]]);
        assert!((direction_distance(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(
            direction_distance(&DenseMatrix::zeros(2, 2), &b),
            Err(UfmError::ZeroMatrix)
        );
        assert!(direction_distance(&DenseMatrix::zeros(1, 2), &b).is_err());
    }
}
