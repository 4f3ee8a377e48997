use proptest::prelude::*;

use ufmlab_core::geometry::balanced_factorization;
use ufmlab_core::linalg::{
    direction_distance, effective_rank, schatten_quasi, singular_values, sylvester_hadamard,
    walsh_sign, DenseMatrix, SingularSpectrum,
};
use ufmlab_core::model::{balancedness_residual, random_init, softmax_matrix, ProblemSpec};
use ufmlab_core::spectral::{psi_matrix, spectral_rhs, SpectralState};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..10.0, 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_rank_ignores_scale(values in spectrum(), c in 1e-3f64..1e3) {
        let s = SingularSpectrum::from_unsorted(values.clone()).unwrap();
        let scaled = SingularSpectrum::from_unsorted(values.iter().map(|v| v * c).collect()).unwrap();
        let r = effective_rank(&s, s.default_zero_tol()).unwrap();
        let rc = effective_rank(&scaled, scaled.default_zero_tol()).unwrap();
        prop_assert!((r - rc).abs() < 1e-9 * r);
        prop_assert!(r <= values.len() as f64 + 1e-9);
        prop_assert!(r >= 1.0 - 1e-12);
    }

    #[test]
    fn direction_distance_ignores_scale(
        a in matrix(3, 4),
        b in matrix(3, 4),
        c in 1e-2f64..1e2,
        d in 1e-2f64..1e2,
    ) {
        prop_assume!(a.frobenius_norm() > 1e-6 && b.frobenius_norm() > 1e-6);
        let m = direction_distance(&a, &b).unwrap();
        let ms = direction_distance(&a.scale(c), &b.scale(d)).unwrap();
        prop_assert!((m - ms).abs() < 1e-10);
        prop_assert!((-1e-12..=4.0 + 1e-12).contains(&m));
    }

    #[test]
    fn schatten_two_is_squared_frobenius(a in matrix(4, 5)) {
        let s = singular_values(&a);
        let q = schatten_quasi(&s, 2.0).unwrap();
        let f = a.frobenius_norm().powi(2);
        prop_assert!((q - f).abs() <= 1e-10 * f.max(1.0));
    }

    #[test]
    fn softmax_columns_are_stochastic(z in matrix(5, 6), shift in -50.0f64..50.0) {
        let p = softmax_matrix(&z.scale(20.0));
        for j in 0..p.cols() {
            let col = p.column(j);
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(col.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        let shifted = DenseMatrix::from_fn(5, 6, |i, j| z[(i, j)] + if j == 2 { shift } else { 0.0 });
        let ps = softmax_matrix(&shifted);
        let base = softmax_matrix(&z);
        for i in 0..5 {
            prop_assert!((ps[(i, 2)] - base[(i, 2)]).abs() < 1e-12);
        }
    }

    #[test]
    fn balancedness_ignores_common_scale(seed in 0u64..1000, c in 1e-2f64..1e2) {
        let spec = ProblemSpec::new(3, 2, 5, 3).unwrap();
        let p = random_init(&spec, 1.0, seed).unwrap();
        let r = balancedness_residual(&p).unwrap();
        let rc = balancedness_residual(&p.scaled(c)).unwrap();
        prop_assert!((r - rc).abs() < 1e-10);
    }

    #[test]
    fn balanced_factorizations_are_balanced(z in matrix(3, 6), seed in 0u64..100) {
        prop_assume!(z.frobenius_norm() > 1e-3);
        let spec = ProblemSpec::new(3, 2, 4, 2).unwrap();
        let p = balanced_factorization(&spec, &z, seed).unwrap();
        prop_assert!(p.logits().sub(&z).frobenius_norm() <= 1e-10 * z.frobenius_norm());
        prop_assert!(balancedness_residual(&p).unwrap() < 1e-10);
    }

    #[test]
    fn linear_relabelings_commute_with_the_reduced_flow(
        a in prop::collection::vec(1e-3f64..2.0, 7),
        depth in 1usize..4,
        cols in prop::array::uniform3(1usize..8),
    ) {
        prop_assume!(gf2_invertible(&cols));
        prop_assert!(is_symmetry(&a, depth, |i| apply(&cols, i)));
    }
}

/// Image of the mode index `i` under the GF(2)-linear map whose basis
/// images are `cols`.
fn apply(cols: &[usize], i: usize) -> usize {
    cols.iter()
        .enumerate()
        .filter(|(b, _)| (i >> b) & 1 == 1)
        .fold(0, |acc, (_, c)| acc ^ c)
}

fn gf2_invertible(cols: &[usize]) -> bool {
    let k = 1usize << cols.len();
    let mut seen = vec![false; k];
    (0..k).all(|i| !std::mem::replace(&mut seen[apply(cols, i)], true))
}

/// Moves the value of mode `i` to mode `f(i)` and checks that the reduced
/// right-hand side moves the same way.
fn is_symmetry(a: &[f64], depth: usize, f: impl Fn(usize) -> usize) -> bool {
    let k = a.len() + 1;
    let mut moved = vec![0.0; a.len()];
    for i in 1..k {
        moved[f(i) - 1] = a[i - 1];
    }
    let rhs = spectral_rhs(&SpectralState::new(a.to_vec(), k, depth).unwrap());
    let out = spectral_rhs(&SpectralState::new(moved, k, depth).unwrap());
    (1..k).all(|i| (out[f(i) - 1] - rhs[i - 1]).abs() <= 1e-12 * rhs[i - 1].abs())
}

#[test]
fn hadamard_rows_multiply_by_xor() {
    for m in 0..=4u32 {
        let phi = sylvester_hadamard(m).unwrap();
        let k = 1usize << m;
        let gram = phi.matmul_t(&phi);
        assert_eq!(gram, DenseMatrix::identity(k).scale(k as f64));
        for i in 0..k {
            for j in 0..k {
                for r in 0..k {
                    assert_eq!(phi[(r, i)] * phi[(r, j)], phi[(r, i ^ j)]);
                    assert_eq!(walsh_sign(r, i ^ j), phi[(r, i ^ j)]);
                }
            }
        }
    }
}

#[test]
fn psi_invariants_hold() {
    for k in [2usize, 4, 8, 16, 32] {
        let psi = psi_matrix(k).unwrap().to_dense();
        let dim = k - 1;
        for i in 0..dim {
            let row: f64 = (0..dim).map(|j| psi[(i, j)]).sum();
            assert_eq!(row, k as f64);
            assert!((0..dim).all(|j| psi[(i, j)] == 0.0 || psi[(i, j)] == 2.0));
        }
        // K (I + 1 1^T)
        let want = DenseMatrix::from_fn(dim, dim, |i, j| k as f64 * if i == j { 2.0 } else { 1.0 });
        assert_eq!(psi.matmul(&psi), want);
    }
}

#[test]
fn every_relabeling_of_four_classes_is_a_symmetry() {
    use itertools::Itertools;
    // GL(2, 2) acts on the three nonzero modes as the full symmetric group
    let a = [0.3, 0.7, 1.1];
    let perms: Vec<Vec<usize>> = (1..4usize).permutations(3).collect();
    assert_eq!(perms.len(), 6);
    for perm in perms {
        assert!(apply(&[perm[0], perm[1]], 3) == perm[2]);
        assert!(is_symmetry(&a, 2, |i| perm[i - 1]), "{perm:?}");
    }
}

#[test]
fn all_linear_relabelings_of_eight_classes_are_symmetries() {
    let a = [0.11, 0.52, 0.23, 0.94, 0.35, 0.76, 0.17];
    let mut count = 0;
    for c0 in 1..8 {
        for c1 in 1..8 {
            for c2 in 1..8 {
                let cols = [c0, c1, c2];
                if gf2_invertible(&cols) {
                    count += 1;
                    assert!(is_symmetry(&a, 3, |i| apply(&cols, i)), "{cols:?}");
                }
            }
        }
    }
    assert_eq!(count, 168);
    // swapping modes 1 and 3 alone is not linear and breaks the symmetry
    let swap = |i: usize| match i {
        1 => 3,
        3 => 1,
        other => other,
    };
    assert!(!is_symmetry(&a, 3, swap));
}
