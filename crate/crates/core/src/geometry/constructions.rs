use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UfmError};
use crate::linalg::{schatten_quasi, simplex_etf, singular_values, svd, DenseMatrix, SCHATTEN_REL_TOL};
use crate::model::{haar_orthogonal, margins, ModelParams, ProblemSpec};

/// Seed for the rotations filling the unused width in constructed factors.
pub const DEFAULT_FILL_SEED: u64 = 0;

/// Tolerance used by [`margin_feasible`].
pub const MARGIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionKind {
    Dnc,
    CrossPolytope,
    CrossPolytopeOdd,
    Kgon,
}

impl ConstructionKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Dnc => "dnc",
            Self::CrossPolytope => "cross_polytope",
            Self::CrossPolytopeOdd => "cross_polytope_odd",
            Self::Kgon => "kgon",
        }
    }
}

/// An explicit logit matrix with a balanced factorization realizing it.
#[derive(Debug, Clone)]
pub struct GeometryConstruction {
    pub kind: ConstructionKind,
    pub spec: ProblemSpec,
    pub scale: f64,
    pub logits: DenseMatrix,
    pub factors: ModelParams,
    /// Closed-form value of `sum_l ||W_l||_F^2`.
    pub objective_value: f64,
    pub min_margin: f64,
}

/// Serializable summary of a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSummary {
    pub label: ConstructionKind,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub depth: usize,
    pub scale: f64,
    pub objective: f64,
    pub margin: f64,
}

impl GeometryConstruction {
    pub fn summary(&self) -> ConstructionSummary {
        ConstructionSummary {
            label: self.kind,
            k: self.spec.k,
            n: self.spec.n,
            d: self.spec.d,
            depth: self.spec.depth,
            scale: self.scale,
            objective: self.objective_value,
            margin: self.min_margin,
        }
    }

    /// `sum_l ||W_l||_F^2` of the stored factors.
    pub fn factor_norm_sum(&self) -> f64 {
        self.factors.squared_norm_sum()
    }
}

/// Balanced factors of `z` from its SVD `U S V^T`: with `s = S^{1/(L+1)}` and
/// seeded rotations `R_l`, `W_L = U s R_L^T`, `W_l = R_{l+1} s R_l^T`,
/// `H_1 = R_1 s V^T`, keeping only the nonzero modes.
pub fn balanced_factorization(spec: &ProblemSpec, z: &DenseMatrix, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    if z.shape() != (spec.k, spec.samples()) {
        return Err(UfmError::Shape(format!(
            "logits {:?} do not match K x nK = {:?}",
            z.shape(),
            (spec.k, spec.samples())
        )));
    }
    let dec = svd(z);
    let values = dec.singular_values.values();
    let tol = values.first().copied().unwrap_or(0.0) * SCHATTEN_REL_TOL;
    let r = values.iter().filter(|&&s| s > tol).count();
    let root: Vec<f64> = values[..r]
        .iter()
        .map(|s| s.powf(1.0 / (spec.depth as f64 + 1.0)))
        .collect();
    let (d, depth) = (spec.d, spec.depth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot: Vec<DenseMatrix> = (0..depth).map(|_| haar_orthogonal(d, &mut rng)).collect();
    let lead_scaled = |m: &DenseMatrix| DenseMatrix::from_fn(m.rows(), r, |i, j| m[(i, j)] * root[j]);
    let lead = |m: &DenseMatrix| m.block(0, 0, m.rows(), r);

    let mut layers = Vec::with_capacity(depth + 1);
    layers.push(lead_scaled(&rot[0]).matmul_t(&lead(&dec.v)));
    for l in 1..depth {
        layers.push(lead_scaled(&rot[l]).matmul_t(&lead(&rot[l - 1])));
    }
    layers.push(lead_scaled(&dec.u).matmul_t(&lead(&rot[depth - 1])));
    ModelParams::from_layers(spec, layers)
}

fn finish(
    kind: ConstructionKind,
    spec: &ProblemSpec,
    scale: f64,
    logits: DenseMatrix,
    objective_value: f64,
) -> Result<GeometryConstruction> {
    let factors = balanced_factorization(spec, &logits, DEFAULT_FILL_SEED)?;
    let min_margin = margins(&logits, spec).min_raw;
    Ok(GeometryConstruction {
        kind,
        spec: *spec,
        scale,
        logits,
        factors,
        objective_value,
        min_margin,
    })
}

fn check_scale(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(UfmError::InvalidArgument(format!(
            "scale must be positive, got {x}"
        )));
    }
    Ok(())
}

/// Smallest `alpha` with unit margin for the simplex construction:
/// `n^{1/(2(L+1))}`.
pub fn dnc_minimal_scale(spec: &ProblemSpec) -> f64 {
    (spec.n as f64).sqrt().powf(1.0 / (spec.depth as f64 + 1.0))
}

/// Smallest `beta` with unit margin for the cross-polytope:
/// `(2 sqrt(n))^{1/(L+1)}`.
pub fn cross_polytope_minimal_scale(spec: &ProblemSpec) -> f64 {
    (2.0 * (spec.n as f64).sqrt()).powf(1.0 / (spec.depth as f64 + 1.0))
}

/// `Z = alpha^{L+1} S (x) 1_n^T / sqrt(n)`, objective `(L+1)(K-1) alpha^2`.
pub fn dnc_construction(spec: &ProblemSpec, alpha: f64) -> Result<GeometryConstruction> {
    spec.validate()?;
    check_scale(alpha)?;
    let l1 = spec.depth as f64 + 1.0;
    let c = alpha.powf(l1) / (spec.n as f64).sqrt();
    let logits = simplex_etf(spec.k)?.kron_ones(spec.n).scale(c);
    let objective = l1 * (spec.k as f64 - 1.0) * alpha * alpha;
    finish(ConstructionKind::Dnc, spec, alpha, logits, objective)
}

/// Block diagonal `C` with `[[1, -1], [-1, 1]]` blocks, plus a trailing
/// `[1]` block when `K` is odd.
pub fn cross_polytope_matrix(k: usize) -> DenseMatrix {
    DenseMatrix::from_fn(k, k, |i, j| {
        if k % 2 == 1 && (i == k - 1 || j == k - 1) {
            return if i == j { 1.0 } else { 0.0 };
        }
        if i / 2 != j / 2 {
            0.0
        } else if i == j {
            1.0
        } else {
            -1.0
        }
    })
}

/// `Z = beta^{L+1} C (x) 1_n^T / (2 sqrt(n))`. For even `K` the objective is
/// `(L+1)(K/2) beta^2`; for odd `K` the unpaired class adds a mode with
/// singular factor `2^{-1/(L+1)} beta`, giving
/// `(L+1) beta^2 [(K-1)/2 + 2^{-2/(L+1)}]`.
pub fn cross_polytope_construction(spec: &ProblemSpec, beta: f64) -> Result<GeometryConstruction> {
    spec.validate()?;
    check_scale(beta)?;
    let l1 = spec.depth as f64 + 1.0;
    let c = beta.powf(l1) / (2.0 * (spec.n as f64).sqrt());
    let logits = cross_polytope_matrix(spec.k).kron_ones(spec.n).scale(c);
    let kf = spec.k as f64;
    let (kind, objective) = if spec.k.is_multiple_of(2) {
        (ConstructionKind::CrossPolytope, l1 * kf / 2.0 * beta * beta)
    } else {
        (
            ConstructionKind::CrossPolytopeOdd,
            l1 * beta * beta * ((kf - 1.0) / 2.0 + 2f64.powf(-2.0 / l1)),
        )
    };
    finish(kind, spec, beta, logits, objective)
}

/// Smallest radius with unit margin for the K-gon: `mu^2 = 1/(1 - cos(2 pi/K))`.
pub fn kgon_minimal_radius(k: usize) -> f64 {
    (1.0 / (1.0 - (2.0 * PI / k as f64).cos())).sqrt()
}

/// Columns `x_i = mu (cos(2 pi i/K + phase), sin(2 pi i/K + phase))` and
/// `Z = X^T X (x) 1_n^T`.
pub fn kgon_code(spec: &ProblemSpec, mu: f64, phase: f64) -> Result<GeometryConstruction> {
    spec.validate()?;
    check_scale(mu)?;
    if spec.k <= 2 {
        return Err(UfmError::InvalidArgument("K-gon needs K > 2".into()));
    }
    let kf = spec.k as f64;
    let angle = |i: usize| 2.0 * PI * (i + 1) as f64 / kf + phase;
    let x = DenseMatrix::from_fn(2, spec.k, |r, i| {
        if r == 0 {
            mu * angle(i).cos()
        } else {
            mu * angle(i).sin()
        }
    });
    let gram = x.t_matmul(&x);
    let logits = gram.kron_ones(spec.n);
    // two equal singular values mu^2 K sqrt(n) / 2
    let l1 = spec.depth as f64 + 1.0;
    let sigma = mu * mu * kf * (spec.n as f64).sqrt() / 2.0;
    let objective = l1 * 2.0 * sigma.powf(2.0 / l1);
    finish(ConstructionKind::Kgon, spec, mu, logits, objective)
}

/// `(L+1) sum sigma_i^{2/(L+1)}`: the least `sum_l ||W_l||_F^2` over all
/// depth-`L` factorizations of `z`.
pub fn max_margin_objective(z: &DenseMatrix, depth: usize) -> Result<f64> {
    if depth < 1 {
        return Err(UfmError::InvalidArgument("depth must be at least 1".into()));
    }
    let l1 = depth as f64 + 1.0;
    Ok(l1 * schatten_quasi(&singular_values(z), 2.0 / l1)?)
}

/// Ratio of normalized logit norms of the simplex structure and a rank-`r`
/// structure: `((K-1)/r)^{-L/2}`.
pub fn norm_propagation_ratio(k: usize, depth: usize, r: usize) -> Result<f64> {
    if r < 1 || r + 1 > k {
        return Err(UfmError::InvalidArgument(format!(
            "rank {r} outside 1..={}",
            k.saturating_sub(1)
        )));
    }
    let ratio = (k as f64 - 1.0) / r as f64;
    Ok((-(depth as f64) / 2.0 * ratio.ln()).exp())
}

/// Whether every correct-minus-other logit gap reaches one.
pub fn margin_feasible(z: &DenseMatrix, spec: &ProblemSpec) -> bool {
    margins(z, spec).min_raw >= 1.0 - MARGIN_TOL
}
