use super::params::{ModelParams, ProblemSpec};
use crate::linalg::DenseMatrix;

/// Column-wise softmax `P_ij = exp(Z_ij) / sum_k exp(Z_kj)`, stabilized by
/// subtracting each column's maximum.
pub fn softmax_matrix(z: &DenseMatrix) -> DenseMatrix {
    let (rows, cols) = z.shape();
    let mut p = DenseMatrix::zeros(rows, cols);
    for j in 0..cols {
        let max = (0..rows).fold(f64::NEG_INFINITY, |m, i| m.max(z[(i, j)]));
        let mut total = 0.0;
        for i in 0..rows {
            let e = (z[(i, j)] - max).exp();
            p[(i, j)] = e;
            total += e;
        }
        for i in 0..rows {
            p[(i, j)] /= total;
        }
    }
    p
}

/// Summed multiclass cross-entropy of class-ordered logits with `n` samples per
/// class.
pub fn ce_loss_of_logits(z: &DenseMatrix, n: usize) -> f64 {
    let (rows, cols) = z.shape();
    let mut loss = 0.0;
    for j in 0..cols {
        let c = j / n;
        let max = (0..rows).fold(f64::NEG_INFINITY, |m, i| m.max(z[(i, j)]));
        let correct = z[(c, j)];
        if correct == max {
            // log(1 + sum_{i != c} e^{z_i - z_c}) without cancellation
            let rest: f64 = (0..rows)
                .filter(|&i| i != c)
                .map(|i| (z[(i, j)] - max).exp())
                .sum();
            loss += rest.ln_1p();
        } else {
            let total: f64 = (0..rows).map(|i| (z[(i, j)] - max).exp()).sum();
            loss += total.ln() + (max - correct);
        }
    }
    loss
}

/// Cross-entropy loss of the deep UFM.
pub fn ce_loss(params: &ModelParams, spec: &ProblemSpec) -> f64 {
    ce_loss_of_logits(&params.logits(), spec.n)
}
