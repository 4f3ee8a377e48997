use serde::{Deserialize, Serialize};

use crate::error::{Result, UfmError};
use crate::linalg::DenseMatrix;

/// Dimensions of a deep UFM run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Number of classes `K`.
    pub k: usize,
    /// Samples per class `n`.
    pub n: usize,
    /// Embedding width `d`.
    pub d: usize,
    /// Depth `L`: number of weight matrices above the features.
    pub depth: usize,
}

impl ProblemSpec {
    pub fn new(k: usize, n: usize, d: usize, depth: usize) -> Result<Self> {
        let spec = Self { k, n, d, depth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(UfmError::InvalidArgument(format!("K = {} < 2", self.k)));
        }
        if self.n < 1 || self.depth < 1 {
            return Err(UfmError::InvalidArgument(format!(
                "need n >= 1 and L >= 1, got n = {}, L = {}",
                self.n, self.depth
            )));
        }
        if self.d < self.k {
            return Err(UfmError::InvalidArgument(format!(
                "width d = {} below class count K = {}",
                self.d, self.k
            )));
        }
        Ok(())
    }

    /// Number of training columns `nK`.
    pub fn samples(&self) -> usize {
        self.n * self.k
    }

    /// Class of column `j` in class-ordered layout.
    #[inline]
    pub fn class_of(&self, column: usize) -> usize {
        column / self.n
    }

    /// Shape of layer `l`, with `l = 0` the features `H_1` and `l = L` the
    /// classifier `W_L`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        match l {
            0 => (self.d, self.samples()),
            l if l == self.depth => (self.k, self.d),
            _ => (self.d, self.d),
        }
    }

    /// One-hot targets `Y = I_K (x) 1_n^T`.
    pub fn targets(&self) -> DenseMatrix {
        DenseMatrix::identity(self.k).kron_ones(self.n)
    }
}

/// Factor matrices of the deep UFM, stored bottom-up: index 0 holds the
/// features `H_1 = W_0`, index `l` holds `W_l`, and index `L` the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<DenseMatrix>,
}

impl ModelParams {
    /// Wraps bottom-up `layers` after checking them against `spec`.
    pub fn from_layers(spec: &ProblemSpec, layers: Vec<DenseMatrix>) -> Result<Self> {
        if layers.len() != spec.depth + 1 {
            return Err(UfmError::Shape(format!(
                "expected {} factors, got {}",
                spec.depth + 1,
                layers.len()
            )));
        }
        for (l, m) in layers.iter().enumerate() {
            if m.shape() != spec.layer_shape(l) {
                return Err(UfmError::Shape(format!(
                    "layer {l} has shape {:?}, expected {:?}",
                    m.shape(),
                    spec.layer_shape(l)
                )));
            }
            if !m.is_finite() {
                return Err(UfmError::InvalidArgument(format!(
                    "layer {l} has non-finite entries"
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Builds from the top-down naming: classifier `W_L`, the middle layers
    /// ordered `W_{L-1}, ..., W_1`, and features `H_1`.
    pub fn from_parts(
        spec: &ProblemSpec,
        top: DenseMatrix,
        mids_top_down: Vec<DenseMatrix>,
        features: DenseMatrix,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(mids_top_down.len() + 2);
        layers.push(features);
        layers.extend(mids_top_down.into_iter().rev());
        layers.push(top);
        Self::from_layers(spec, layers)
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.layers
    }

    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.layers[l]
    }

    /// `W_L`.
    pub fn top(&self) -> &DenseMatrix {
        self.layers.last().expect("at least two layers")
    }

    /// `H_1`.
    pub fn features(&self) -> &DenseMatrix {
        &self.layers[0]
    }

    /// `W_{L-1}, ..., W_1` in top-down order.
    pub fn mids(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.layers[1..self.layers.len() - 1].iter().rev()
    }

    /// Logit matrix `Z = W_L ... W_1 H_1`.
    pub fn logits(&self) -> DenseMatrix {
        let mut z = self.layers[0].clone();
        for w in &self.layers[1..] {
            z = w.matmul(&z);
        }
        z
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.layers.iter().map(DenseMatrix::frobenius_norm).collect()
    }

    /// `sum_l ||W_l||_F^2` including the features.
    pub fn squared_norm_sum(&self) -> f64 {
        self.layers.iter().map(|m| m.frobenius_dot(m)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseMatrix::is_finite)
    }

    /// Multiplies every factor by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            layers: self.layers.iter().map(|m| m.scale(c)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(ProblemSpec::new(1, 1, 4, 1).is_err());
        assert!(ProblemSpec::new(4, 0, 4, 1).is_err());
        assert!(ProblemSpec::new(4, 1, 4, 0).is_err());
        assert!(ProblemSpec::new(4, 1, 3, 1).is_err());
        let s = ProblemSpec::new(3, 2, 5, 2).unwrap();
        assert_eq!(s.layer_shape(0), (5, 6));
        assert_eq!(s.layer_shape(1), (5, 5));
        assert_eq!(s.layer_shape(2), (3, 5));
        assert_eq!(s.class_of(3), 1);
    }

    #[test]
    fn parts_round_trip_order() {
        let s = ProblemSpec::new(2, 1, 2, 3).unwrap();
        let mk = |v: f64, r: usize, c: usize| DenseMatrix::from_fn(r, c, |_, _| v);
        let p = ModelParams::from_parts(
            &s,
            mk(3.0, 2, 2),
            vec![mk(2.0, 2, 2), mk(1.0, 2, 2)],
            mk(0.5, 2, 2),
        )
        .unwrap();
        assert_eq!(p.layer(1)[(0, 0)], 1.0);
        assert_eq!(p.layer(2)[(0, 0)], 2.0);
        let mids: Vec<f64> = p.mids().map(|m| m[(0, 0)]).collect();
        assert_eq!(mids, vec![2.0, 1.0]);
        assert!(ModelParams::from_layers(&s, vec![mk(1.0, 2, 2)]).is_err());
    }
}
