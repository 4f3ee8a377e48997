use super::loss::{ce_loss_of_logits, softmax_matrix};
use super::params::{ModelParams, ProblemSpec};
use crate::linalg::DenseMatrix;

/// Time derivatives of every factor, in the same bottom-up order as
/// [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBundle(Vec<DenseMatrix>);

impl FlowBundle {
    pub fn layers(&self) -> &[DenseMatrix] {
        &self.0
    }

    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.0[l]
    }

    pub fn into_layers(self) -> Vec<DenseMatrix> {
        self.0
    }
}

/// Partial products `H_l = W_{l-1} ... W_0` for `l = 1..=L` plus `Z`.
/// Entry `l - 1` holds `H_l`; the last entry is `Z = W_L H_L`.
fn forward(params: &ModelParams) -> Vec<DenseMatrix> {
    let layers = params.layers();
    let mut out = Vec::with_capacity(layers.len());
    out.push(layers[0].clone());
    for w in &layers[1..] {
        let next = w.matmul(out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

/// Gradient flow right-hand side from precomputed forward products and
/// residual `G = Y - P`.
fn flow_from(params: &ModelParams, hs: &[DenseMatrix], g: &DenseMatrix, lambda: f64) -> FlowBundle {
    let layers = params.layers();
    let depth = layers.len() - 1;
    let mut grads = vec![DenseMatrix::zeros(0, 0); depth + 1];
    // back = A_{l+1}^T G, starting from A_{L+1} = I
    let mut back = g.clone();
    for l in (0..=depth).rev() {
        let mut grad = if l == 0 {
            back.clone()
        } else {
            back.matmul_t(&hs[l - 1])
        };
        if lambda != 0.0 {
            grad.axpy(-2.0 * lambda, &layers[l]);
        }
        grads[l] = grad;
        if l > 0 {
            back = layers[l].t_matmul(&back);
        }
    }
    FlowBundle(grads)
}

fn residual(spec: &ProblemSpec, z: &DenseMatrix) -> DenseMatrix {
    spec.targets().sub(&softmax_matrix(z))
}

/// `dW_l/dt = A_{l+1}^T (Y - P) H_l^T - 2 lambda W_l` for every layer, with
/// `W_0 = H_1`. At `lambda = 0` this is the negative gradient of the summed
/// cross-entropy.
pub fn flow_rhs(params: &ModelParams, spec: &ProblemSpec, lambda: f64) -> FlowBundle {
    let hs = forward(params);
    let g = residual(spec, hs.last().expect("nonempty"));
    flow_from(params, &hs, &g, lambda)
}

/// `dZ/dt = sum_l A_{l+1} A_{l+1}^T (Y - P) H_l^T H_l`, built from the Gram
/// matrices of the partial products rather than from [`flow_rhs`].
pub fn logit_velocity(params: &ModelParams, spec: &ProblemSpec) -> DenseMatrix {
    let layers = params.layers();
    let depth = layers.len() - 1;
    let hs = forward(params);
    let z = &hs[depth];
    let g = residual(spec, z);

    // A_{l+1} A_{l+1}^T for l = 0..=L; index l.
    let mut a_grams = vec![DenseMatrix::zeros(0, 0); depth + 1];
    let mut a = DenseMatrix::identity(spec.k);
    a_grams[depth] = DenseMatrix::identity(spec.k);
    for l in (0..depth).rev() {
        a = a.matmul(&layers[l + 1]);
        a_grams[l] = a.matmul_t(&a);
    }

    let mut v = a_grams[0].matmul(&g);
    for l in 1..=depth {
        let h_gram = hs[l - 1].t_matmul(&hs[l - 1]);
        v.axpy(1.0, &a_grams[l].matmul(&g).matmul(&h_gram));
    }
    v
}

/// One explicit Euler step `W <- W + h * rhs`. Returns the cross-entropy at
/// the parameters before the step.
pub fn euler_step(params: &mut ModelParams, spec: &ProblemSpec, lambda: f64, h: f64) -> f64 {
    let hs = forward(params);
    let z = hs.last().expect("nonempty");
    let loss = ce_loss_of_logits(z, spec.n);
    let g = residual(spec, z);
    let rhs = flow_from(params, &hs, &g, lambda);
    for (w, dw) in params.layers_mut().iter_mut().zip(rhs.0.iter()) {
        w.axpy(h, dw);
    }
    loss
}
