use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ufmlab_core::geometry::balanced_factorization;
use ufmlab_core::linalg::{direction_distance, simplex_etf, singular_values, svd, DenseMatrix};
use ufmlab_core::model::{
    balancedness_residual, ce_loss, euler_step, flow_rhs, hadamard_init, random_init,
    softmax_matrix, train, ModelParams, ProblemSpec, TrainSchedule,
};

fn perturbed(params: &ModelParams, l: usize, i: usize, j: usize, h: f64) -> ModelParams {
    let mut p = params.clone();
    let m = &mut p.layers_mut()[l];
    let cols = m.cols();
    m.as_mut_slice()[i * cols + j] += h;
    p
}

#[test]
fn gradient_matches_central_differences_on_twenty_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    for case in 0..20 {
        let k = [2, 4][case % 2];
        let depth = 1 + case % 3;
        let d = [4, 8][(case / 3) % 2];
        let n = 1 + (case / 6) % 2;
        let spec = ProblemSpec::new(k, n, d, depth).unwrap();
        let params = random_init(&spec, 1.5, rng.random()).unwrap();
        let rhs = flow_rhs(&params, &spec, 0.0);
        for l in 0..=depth {
            let g = rhs.layer(l);
            let mut fd = DenseMatrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    let up = ce_loss(&perturbed(&params, l, i, j, h), &spec);
                    let down = ce_loss(&perturbed(&params, l, i, j, -h), &spec);
                    fd.as_mut_slice()[i * g.cols() + j] = -(up - down) / (2.0 * h);
                }
            }
            let rel = g.sub(&fd).frobenius_norm() / g.frobenius_norm();
            assert!(rel <= 1e-6, "case {case} (K={k}, L={depth}, d={d}, n={n}) layer {l}: {rel:e}");
        }
    }
}

/// Balanced factorization of `c S (x) 1_n^T` plus uniform noise of size `noise`.
fn balanced_start(spec: &ProblemSpec, c: f64, noise: f64, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = simplex_etf(spec.k).unwrap().kron_ones(spec.n);
    let z = DenseMatrix::from_fn(spec.k, spec.samples(), |i, j| {
        c * s[(i, j)] + rng.random_range(-noise..noise)
    });
    balanced_factorization(spec, &z, seed).unwrap()
}

fn worst_residual(spec: &ProblemSpec, mut p: ModelParams, h: f64, steps: usize) -> f64 {
    let mut worst = balancedness_residual(&p).unwrap();
    assert!(worst < 1e-10);
    for _ in 0..steps {
        euler_step(&mut p, spec, 0.0, h);
        worst = worst.max(balancedness_residual(&p).unwrap());
    }
    worst
}

#[test]
fn balancedness_drift_from_a_near_simplex_start_is_small() {
    for (k, n, d, depth) in [(3, 2, 5, 2), (4, 2, 6, 3), (10, 5, 12, 2)] {
        let spec = ProblemSpec::new(k, n, d, depth).unwrap();
        let worst = worst_residual(&spec, balanced_start(&spec, 0.5, 0.3, 3), 1e-2, 10_000);
        assert!(worst <= 1e-3, "K={k} L={depth}: {worst:e}");
    }
}

// Measured once at 0.275 for this configuration.
const DRIFT_CONSTANT: f64 = 0.3;

#[test]
fn balancedness_drift_is_first_order_in_the_step() {
    // an unstructured target forces the factors to rotate, the worst case
    let spec = ProblemSpec::new(3, 2, 5, 2).unwrap();
    let drift: Vec<f64> = [1e-2, 5e-3]
        .iter()
        .map(|&h| worst_residual(&spec, balanced_start(&spec, 0.0, 0.5, 3), h, 10_000))
        .collect();
    assert!(drift[0] <= DRIFT_CONSTANT * 1e-2, "{:e}", drift[0]);
    assert!(drift[1] <= DRIFT_CONSTANT * 5e-3, "{:e}", drift[1]);
    let order = (drift[0] / drift[1]).log2();
    assert!((order - 1.0).abs() < 0.05, "observed order {order}");
}

#[test]
fn norms_grow_once_the_data_is_separated() {
    let spec = ProblemSpec::new(4, 2, 6, 2).unwrap();
    let params = random_init(&spec, 1.0, 11).unwrap();
    let schedule = TrainSchedule {
        step_size: 0.05,
        epochs_phase2: 20_000,
        log_every: 200,
        stop_loss: None,
        ..Default::default()
    };
    let out = train(params, &spec, &schedule).unwrap();
    let rows = &out.log.rows;
    let first = rows
        .iter()
        .position(|r| r.loss < std::f64::consts::LN_2)
        .expect("loss falls below log 2");
    assert!(rows.len() - first > 10);
    for w in rows[first..].windows(2) {
        for (a, b) in w[0].layer_norms.iter().zip(&w[1].layer_norms) {
            assert!(b >= a, "norm fell from {a} to {b} at epoch {}", w[1].epoch);
        }
        assert!(w[1].loss <= w[0].loss);
    }
}

#[test]
fn softmax_stays_stochastic_along_training() {
    let spec = ProblemSpec::new(5, 3, 7, 3).unwrap();
    let mut p = random_init(&spec, 1.2, 5).unwrap();
    for _ in 0..500 {
        euler_step(&mut p, &spec, 1e-3, 0.05);
        let s = softmax_matrix(&p.logits());
        for j in 0..s.cols() {
            let col = s.column(j);
            assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }
}

/// `||P_a^T P_b||_F^2 / r` for the leading `r`-dimensional subspaces.
fn alignment(a: &DenseMatrix, b: &DenseMatrix, r: usize) -> f64 {
    let pa = a.block(0, 0, a.rows(), r);
    let pb = b.block(0, 0, b.rows(), r);
    pa.t_matmul(&pb).frobenius_norm().powi(2) / r as f64
}

#[test]
fn hadamard_singular_subspaces_do_not_move() {
    let spec = ProblemSpec::new(4, 2, 6, 2).unwrap();
    let alpha = [0.0, 0.6, 0.75, 0.9];
    let start = hadamard_init(&spec, &alpha, 9).unwrap();
    let mut p = start.clone();
    for _ in 0..1000 {
        euler_step(&mut p, &spec, 0.0, 1e-2);
    }
    let r = spec.k - 1;
    for l in 0..=spec.depth {
        let before = svd(start.layer(l));
        let after = svd(p.layer(l));
        // the modes have grown but stay distinct
        let s = after.singular_values.values();
        assert!(s[0] > 1.0 && s[r] < 1e-10 * s[0]);
        assert!(alignment(&before.u, &after.u, r) >= 1.0 - 1e-6, "layer {l} left");
        assert!(alignment(&before.v, &after.v, r) >= 1.0 - 1e-6, "layer {l} right");
    }
}

#[test]
fn random_init_has_the_stated_statistics() {
    let spec = ProblemSpec::new(4, 3, 256, 2).unwrap();
    let eps = 0.2;
    let p = random_init(&spec, eps, 17).unwrap();
    for layer in p.layers() {
        let v = layer.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let ratio = var / (eps * eps) * spec.d as f64;
        assert!((ratio - 1.0).abs() < 0.1, "variance ratio {ratio}");
    }
    let want = eps * (spec.samples() as f64).sqrt();
    let got = p.features().frobenius_norm();
    assert!((got / want - 1.0).abs() < 0.15, "{got} vs {want}");
}

#[test]
fn hadamard_init_realizes_the_requested_spectrum() {
    let spec = ProblemSpec::new(8, 3, 10, 3).unwrap();
    let alpha = [0.0, 1.3, 0.4, 0.9, 1.1, 0.7, 0.5, 1.2];
    let p = hadamard_init(&spec, &alpha, 4).unwrap();
    let mut want: Vec<f64> = alpha.iter().map(|a| a.powi(4)).collect();
    want.sort_by(|a, b| b.total_cmp(a));
    let got = singular_values(&p.logits());
    for (g, w) in got.values().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12 * want[0], "{g} vs {w}");
    }
    assert!(balancedness_residual(&p).unwrap() < 1e-12);

    let uniform = [0.0, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8];
    let z = hadamard_init(&spec, &uniform, 4).unwrap().logits();
    let etf = simplex_etf(8).unwrap().kron_ones(3);
    assert!(direction_distance(&z, &etf).unwrap() < 1e-12);
}
