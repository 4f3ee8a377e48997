//! One-sided (Hestenes) Jacobi SVD.
//!
//! Orthogonalizes the columns of the taller orientation of the input with
//! plane rotations until every pair is orthogonal to working precision. The
//! singular values come out with high relative accuracy, which the Schatten
//! quasi-norm evaluation needs for small `p`.

use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Result, UfmError};

const MAX_SWEEPS: usize = 80;

/// Nonincreasing list of nonnegative singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum(Vec<f64>);

impl SingularSpectrum {
    /// Validates and wraps `values`. Values must be finite, nonnegative and
    /// sorted nonincreasing.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(UfmError::InvalidArgument(format!(
                "singular value {v} at index {i} is not a finite nonnegative number"
            )));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(UfmError::InvalidArgument(
                "singular values must be sorted nonincreasing".into(),
            ));
        }
        Ok(Self(values))
    }

    /// Sorts arbitrary nonnegative values into a spectrum.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    /// Values strictly above `zero_tol`.
    pub fn nonzero(&self, zero_tol: f64) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied().filter(move |&s| s > zero_tol)
    }

    /// Number of values strictly above `zero_tol`.
    pub fn rank(&self, zero_tol: f64) -> usize {
        self.nonzero(zero_tol).count()
    }

    /// The default cutoff for "nonzero" used by effective rank: `1e-12 * sigma_1`.
    pub fn default_zero_tol(&self) -> f64 {
        1e-12 * self.largest()
    }
}

/// Thin SVD `A = U diag(s) V^T` with `r = min(rows, cols)` columns in `U` and `V`.
///
/// Columns of `U` (resp. `V` for wide inputs) paired with an exactly zero
/// singular value are left as zero vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: SingularSpectrum,
    pub v: DenseMatrix,
}

pub fn svd(a: &DenseMatrix) -> Svd {
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose());
        Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        }
    }
}

pub fn singular_values(a: &DenseMatrix) -> SingularSpectrum {
    svd(a).singular_values
}

fn jacobi_tall(a: &DenseMatrix) -> Svd {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        values.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = cols[j][i] / sigma;
            }
        }
        for i in 0..n {
            v[(i, k)] = vcols[j][i];
        }
    }
    Svd {
        u,
        singular_values: SingularSpectrum(values),
        v,
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}
