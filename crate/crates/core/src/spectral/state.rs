use serde::{Deserialize, Serialize};

use crate::error::{Result, UfmError};
use crate::linalg::{log2_exact, walsh_sign, DenseMatrix};
use crate::model::ProblemSpec;

fn check_classes(k: usize) -> Result<u32> {
    let m = log2_exact(k)?;
    if m == 0 {
        return Err(UfmError::InvalidArgument(
            "reduced dynamics need K >= 2".into(),
        ));
    }
    Ok(m)
}

/// `(K-1) x (K-1)` core of `1 1^T - Phi`: `Psi_ij = 2` when `popcount(i & j)`
/// is odd and `0` otherwise, for modes `i, j = 1..K-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiMatrix {
    dim: usize,
    entries: Vec<u8>,
}

impl PsiMatrix {
    pub fn new(k: usize) -> Result<Self> {
        check_classes(k)?;
        let dim = k - 1;
        let entries = (1..k)
            .flat_map(|i| (1..k).map(move |j| if walsh_sign(i, j) < 0.0 { 2 } else { 0 }))
            .collect();
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry for zero-based mode positions (mode `i + 1`, mode `j + 1`).
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.dim + j]
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.dim, self.dim, |i, j| f64::from(self.get(i, j)))
    }

    /// `Psi x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.dim)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .filter(|(p, _)| **p != 0)
                    .map(|(_, v)| 2.0 * v)
                    .sum()
            })
            .collect()
    }
}

/// Shorthand for [`PsiMatrix::new`].
pub fn psi_matrix(k: usize) -> Result<PsiMatrix> {
    PsiMatrix::new(k)
}

/// Reduced logit singular values `a_1..a_{K-1}` of the Hadamard dynamics.
/// Mode 0 is fixed at zero and not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    a: Vec<f64>,
    k: usize,
    depth: usize,
}

impl SpectralState {
    pub fn new(a: Vec<f64>, k: usize, depth: usize) -> Result<Self> {
        check_classes(k)?;
        if depth < 1 {
            return Err(UfmError::InvalidArgument("depth must be at least 1".into()));
        }
        if a.len() != k - 1 {
            return Err(UfmError::Shape(format!(
                "expected {} modes for K = {k}, got {}",
                k - 1,
                a.len()
            )));
        }
        if let Some((index, &value)) = a
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(UfmError::NegativeEntry { index, value });
        }
        Ok(Self { a, k, depth })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn l1_norm(&self) -> f64 {
        self.a.iter().sum()
    }

    /// `a / ||a||_1`.
    pub fn normalized(&self) -> Vec<f64> {
        let s = self.l1_norm();
        self.a.iter().map(|x| x / s).collect()
    }
}

/// `2L / (L + 1)`.
pub fn growth_exponent(depth: usize) -> f64 {
    2.0 * depth as f64 / (depth as f64 + 1.0)
}

/// Right-hand side evaluator with `Psi` built once.
#[derive(Debug, Clone)]
pub struct SpectralSystem {
    psi: PsiMatrix,
    k: usize,
    depth: usize,
}

/// Pieces of the reduced right-hand side at one state.
#[derive(Debug, Clone)]
pub struct RhsParts {
    pub b: Vec<f64>,
    pub exponentials: Vec<f64>,
    pub denominator: f64,
    pub rhs: Vec<f64>,
}

impl SpectralSystem {
    pub fn new(k: usize, depth: usize) -> Result<Self> {
        Ok(Self {
            psi: PsiMatrix::new(k)?,
            k,
            depth,
        })
    }

    pub fn for_state(state: &SpectralState) -> Self {
        Self::new(state.k, state.depth).expect("state was validated")
    }

    pub fn psi(&self) -> &PsiMatrix {
        &self.psi
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn parts(&self, a: &[f64]) -> RhsParts {
        let exponentials: Vec<f64> = self.psi.apply(a).iter().map(|x| (-x).exp()).collect();
        let denominator = 1.0 + exponentials.iter().sum::<f64>();
        let b = self.psi.apply(&exponentials);
        let p = growth_exponent(self.depth);
        let rhs = b
            .iter()
            .zip(a)
            .map(|(bi, ai)| bi * ai.max(0.0).powf(p) / denominator)
            .collect();
        RhsParts {
            b,
            exponentials,
            denominator,
            rhs,
        }
    }

    pub fn rhs(&self, a: &[f64]) -> Vec<f64> {
        self.parts(a).rhs
    }
}

/// `da_i/dt = b_i a_i^{2L/(L+1)} / D` with `b = Psi e`, `e_j = exp(-(Psi a)_j)`
/// and `D = 1 + sum_j e_j`.
pub fn spectral_rhs(state: &SpectralState) -> Vec<f64> {
    SpectralSystem::for_state(state).rhs(&state.a)
}

/// Near-origin approximation `a_i^{2L/(L+1)} (1 - a_i)`.
pub fn linearized_rhs(state: &SpectralState) -> Vec<f64> {
    let p = growth_exponent(state.depth);
    state.a.iter().map(|a| a.powf(p) * (1.0 - a)).collect()
}

/// Softmax of `Z = U diag(a) U^T` with `U = Phi / sqrt(K)` in the same basis:
/// `P(Z) = U diag(nu) U^T` where
/// `nu_i = sum_j Phi_ij exp((Phi a)_j / K) / sum_j exp((Phi a)_j / K)`.
/// Takes and returns all `K` modes including mode 0.
pub fn hadamard_softmax_modes(a: &[f64]) -> Result<Vec<f64>> {
    let k = a.len();
    check_classes(k)?;
    let kf = k as f64;
    let phi_a: Vec<f64> = (0..k)
        .map(|j| (0..k).map(|i| walsh_sign(j, i) * a[i]).sum::<f64>() / kf)
        .collect();
    let max = phi_a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = phi_a.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok((0..k)
        .map(|i| (0..k).map(|j| walsh_sign(i, j) * w[j]).sum::<f64>() / total)
        .collect())
}

/// Change of variables `a' = a_scale * a`, `t' = t_scale * t` from the
/// balanced unreduced dynamics onto the reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    pub a_scale: f64,
    pub t_scale: f64,
}

/// `a_scale = 1 / (K sqrt(n))`, `t_scale = (L+1) (K sqrt(n))^{2L/(L+1)} / K`.
pub fn scale_map(spec: &ProblemSpec) -> Result<ScaleMap> {
    spec.validate()?;
    let c = spec.k as f64 * (spec.n as f64).sqrt();
    let l = spec.depth as f64;
    let map = ScaleMap {
        a_scale: 1.0 / c,
        t_scale: (l + 1.0) * c.powf(growth_exponent(spec.depth)) / spec.k as f64,
    };
    debug_assert!(map.a_scale != 1.0);
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_small_cases() {
        assert_eq!(psi_matrix(2).unwrap().to_dense(), DenseMatrix::from_rows(&[[2.0]]));
        let p4 = psi_matrix(4).unwrap().to_dense();
        assert_eq!(
            p4,
            DenseMatrix::from_rows(&[[2.0, 0.0, 2.0], [0.0, 2.0, 2.0], [2.0, 2.0, 0.0]])
        );
        let want = DenseMatrix::identity(3)
            .add(&DenseMatrix::from_fn(3, 3, |_, _| 1.0))
            .scale(4.0);
        assert_eq!(p4.matmul(&p4), want);
        assert!(psi_matrix(6).is_err());
        assert!(psi_matrix(1).is_err());
    }

    #[test]
    fn psi_algebra_up_to_k64() {
        for m in 1..=6u32 {
            let k = 1usize << m;
            let psi = psi_matrix(k).unwrap();
            let d = psi.to_dense();
            let kf = k as f64;
            for row in psi.apply(&vec![1.0; k - 1]) {
                assert_eq!(row, kf);
            }
            let sq = d.matmul(&d);
            let want = DenseMatrix::from_fn(k - 1, k - 1, |i, j| if i == j { 2.0 * kf } else { kf });
            assert_eq!(sq, want);
        }
    }

    #[test]
    fn uniform_state_closed_form() {
        for (k, l) in [(4usize, 1usize), (8, 2), (16, 3)] {
            let mu = 0.37;
            let st = SpectralState::new(vec![mu; k - 1], k, l).unwrap();
            let kf = k as f64;
            let e = (-kf * mu).exp();
            let want = mu.powf(growth_exponent(l)) * kf * e / (1.0 + (kf - 1.0) * e);
            for r in spectral_rhs(&st) {
                assert!((r - want).abs() < 1e-14 * want);
            }
        }
    }

    #[test]
    fn scalar_case() {
        let mu: f64 = 0.8;
        for l in 1..4 {
            let st = SpectralState::new(vec![mu], 2, l).unwrap();
            let want =
                2.0 * (-2.0 * mu).exp() * mu.powf(growth_exponent(l)) / (1.0 + (-2.0 * mu).exp());
            assert!((spectral_rhs(&st)[0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn near_origin_matches_linearization() {
        let a = vec![1e-7, 3e-7, 2e-7];
        let st = SpectralState::new(a.clone(), 4, 2).unwrap();
        let full = spectral_rhs(&st);
        let lin = linearized_rhs(&st);
        for ((f, l), ai) in full.iter().zip(&lin).zip(&a) {
            assert!((f / ai.powf(growth_exponent(2)) - 1.0).abs() < 1e-5);
            assert!((f / l - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn state_validation() {
        assert!(SpectralState::new(vec![1.0; 3], 4, 1).is_ok());
        assert!(SpectralState::new(vec![1.0; 4], 5, 1).is_err());
        assert!(SpectralState::new(vec![1.0; 2], 4, 1).is_err());
        assert!(SpectralState::new(vec![1.0, 0.0, 1.0], 4, 1).is_err());
        assert!(SpectralState::new(vec![1.0; 3], 4, 0).is_err());
    }

    #[test]
    fn scale_map_examples() {
        let m = scale_map(&ProblemSpec::new(2, 1, 2, 1).unwrap()).unwrap();
        assert!((m.a_scale - 0.5).abs() < 1e-15 && (m.t_scale - 2.0).abs() < 1e-14);
        let m = scale_map(&ProblemSpec::new(4, 1, 4, 3).unwrap()).unwrap();
        assert!((m.a_scale - 0.25).abs() < 1e-15 && (m.t_scale - 8.0).abs() < 1e-13);
    }

    #[test]
    fn hadamard_softmax_at_zero_is_uniform() {
        let nu = hadamard_softmax_modes(&[0.0; 8]).unwrap();
        // P = 11^T / K  =>  nu = (1, 0, ..., 0)
        assert!((nu[0] - 1.0).abs() < 1e-15);
        assert!(nu[1..].iter().all(|x| x.abs() < 1e-15));
    }
}
