//! Alignment of the initial logit velocity with the simplex direction.

use serde::{Deserialize, Serialize};

use ufmlab_core::linalg::{direction_distance, simplex_etf};
use ufmlab_core::model::{logit_velocity, random_init, ProblemSpec};

/// `direction_distance(dZ/dt(0), S (x) 1_n^T)` at a random init of scale `eps`.
pub fn concentration_metric(spec: &ProblemSpec, eps: f64, seed: u64) -> ufmlab_core::Result<f64> {
    let params = random_init(spec, eps, seed)?;
    let velocity = logit_velocity(&params, spec);
    let target = simplex_etf(spec.k)?.kron_ones(spec.n);
    direction_distance(&velocity, &target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub d: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation of the metric over `repetitions`
/// seeds per width. Seeds follow the sweep order: `master_seed + run index`.
pub fn concentration_experiment(
    spec: &ProblemSpec,
    eps: f64,
    widths: &[usize],
    repetitions: usize,
    master_seed: u64,
) -> ufmlab_core::Result<Vec<ConcentrationRow>> {
    let mut index = 0u64;
    widths
        .iter()
        .map(|&d| {
            let s = ProblemSpec { d, ..*spec };
            let values = (0..repetitions)
                .map(|_| {
                    let seed = master_seed.wrapping_add(index);
                    index += 1;
                    concentration_metric(&s, eps, seed)
                })
                .collect::<ufmlab_core::Result<Vec<f64>>>()?;
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(ConcentrationRow { d, mean, std })
        })
        .collect()
}
