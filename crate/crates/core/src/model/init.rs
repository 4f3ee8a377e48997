use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::params::{ModelParams, ProblemSpec};
use crate::error::{Result, UfmError};
use crate::linalg::{log2_exact, sylvester_hadamard, DenseMatrix};

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches")
}

/// Every factor drawn i.i.d. from `eps * N(0, 1/d)`, in the order `H_1`,
/// `W_1`, ..., `W_L`.
pub fn random_init(spec: &ProblemSpec, eps: f64, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(UfmError::InvalidArgument(format!(
            "init scale must be positive, got {eps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = eps / (spec.d as f64).sqrt();
    let layers = (0..=spec.depth)
        .map(|l| {
            let (r, c) = spec.layer_shape(l);
            gaussian_matrix(r, c, std, &mut rng)
        })
        .collect();
    ModelParams::from_layers(spec, layers)
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt (applied twice) on a
/// Gaussian matrix. Positive `R` diagonal makes the sign convention canonical.
pub fn haar_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let g = gaussian_matrix(d, d, 1.0, rng);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = g.column(j);
        for _ in 0..2 {
            for q in &cols {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    DenseMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Householder reflector `I - 2 w w^T / (w^T w)` with `w = e_1 - 1/sqrt(n)`,
/// an orthogonal matrix whose first column is `1_n / sqrt(n)`.
pub fn ones_completion(n: usize) -> DenseMatrix {
    let c = 1.0 / (n as f64).sqrt();
    let w: Vec<f64> = (0..n)
        .map(|i| if i == 0 { 1.0 - c } else { -c })
        .collect();
    let ww: f64 = w.iter().map(|x| x * x).sum();
    if ww == 0.0 {
        return DenseMatrix::identity(n);
    }
    DenseMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - 2.0 * w[i] * w[j] / ww
    })
}

/// Balanced spectral initialization. With `U = Phi / sqrt(K)`, `V = U (x) Q`
/// and seeded rotations `R_1..R_L`, sets `W_L = U D R_L^T`,
/// `W_l = R_{l+1} D R_l^T` and `H_1 = R_1 D V^T`, where `D` carries `alpha`
/// on its leading diagonal. The logits are `U diag(a / sqrt(n)) U^T (x) 1_n^T`
/// with `a_i = alpha_i^{L+1}`.
pub fn hadamard_init(spec: &ProblemSpec, alpha: &[f64], rotation_seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let m = log2_exact(spec.k)?;
    if alpha.len() != spec.k {
        return Err(UfmError::Shape(format!(
            "expected {} mode values, got {}",
            spec.k,
            alpha.len()
        )));
    }
    if let Some((index, &value)) = alpha
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(UfmError::NegativeEntry { index, value });
    }
    let (k, n, d, depth) = (spec.k, spec.n, spec.d, spec.depth);
    let u = sylvester_hadamard(m)?.scale(1.0 / (k as f64).sqrt());
    let q = ones_completion(n);

    let mut rng = ChaCha8Rng::seed_from_u64(rotation_seed);
    let rotations: Vec<DenseMatrix> = (0..depth).map(|_| haar_orthogonal(d, &mut rng)).collect();
    // R_l[:, :K] diag(alpha)
    let scaled_lead = |r: &DenseMatrix| DenseMatrix::from_fn(d, k, |i, j| r[(i, j)] * alpha[j]);
    let lead = |r: &DenseMatrix| r.block(0, 0, d, k);

    let mut layers = Vec::with_capacity(depth + 1);
    // Only the columns v_{jn} = u_j (x) q_1 of V meet nonzero entries of D.
    let v_sel = DenseMatrix::from_fn(n * k, k, |row, j| u[(row / n, j)] * q[(row % n, 0)]);
    layers.push(scaled_lead(&rotations[0]).matmul_t(&v_sel));
    for l in 1..depth {
        layers.push(scaled_lead(&rotations[l]).matmul_t(&lead(&rotations[l - 1])));
    }
    let top = DenseMatrix::from_fn(k, k, |i, j| u[(i, j)] * alpha[j]);
    layers.push(top.matmul_t(&lead(&rotations[depth - 1])));
    ModelParams::from_layers(spec, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    #[test]
    fn random_init_is_deterministic() {
        let spec = ProblemSpec::new(3, 2, 5, 2).unwrap();
        assert_eq!(random_init(&spec, 0.1, 7), random_init(&spec, 0.1, 7));
        assert_ne!(random_init(&spec, 0.1, 7), random_init(&spec, 0.1, 8));
        assert!(random_init(&spec, 0.0, 7).is_err());
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = haar_orthogonal(9, &mut rng);
        assert!(r.t_matmul(&r).sub(&DenseMatrix::identity(9)).max_abs() < 1e-13);
    }

    #[test]
    fn completion_first_column_is_normalized_ones() {
        for n in 1..6 {
            let q = ones_completion(n);
            assert!(q.t_matmul(&q).sub(&DenseMatrix::identity(n)).max_abs() < 1e-14);
            for i in 0..n {
                assert!((q[(i, 0)] - 1.0 / (n as f64).sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hadamard_logits_have_prescribed_spectrum() {
        let spec = ProblemSpec::new(4, 3, 6, 2).unwrap();
        let alpha = [0.0, 1.3, 0.7, 1.1];
        let p = hadamard_init(&spec, &alpha, 3).unwrap();
        let sv = singular_values(&p.logits());
        let mut want: Vec<f64> = alpha.iter().map(|a| a * a * a).collect();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (g, w) in sv.values().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
        assert!(hadamard_init(&ProblemSpec::new(3, 1, 3, 1).unwrap(), &[0.0; 3], 0).is_err());
    }
}
