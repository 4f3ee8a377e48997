use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::state::{SpectralState, SpectralSystem};
use crate::error::{Result, UfmError};
use crate::linalg::log2_exact;

fn check_hadamard_order(k: usize) -> Result<()> {
    let m = log2_exact(k)?;
    if m < 2 {
        return Err(UfmError::InvalidArgument(format!(
            "stability statements need K = 2^m with m > 1, got K = {k}"
        )));
    }
    Ok(())
}

/// `(L-1)(K-1)/(L+1)`: the uniform direction is stable above this `||a||_1`
/// and unstable below it.
pub fn dnc_stability_threshold(k: usize, depth: usize) -> Result<f64> {
    check_hadamard_order(k)?;
    if depth < 1 {
        return Err(UfmError::InvalidArgument("depth must be at least 1".into()));
    }
    let l = depth as f64;
    Ok((l - 1.0) * (k as f64 - 1.0) / (l + 1.0))
}

/// `(K/(K-2))^{(L+1)/(L-1)}`: above this `gamma/delta` ratio the mixed
/// initialization keeps moving away from the uniform direction.
pub fn kl_divergence_threshold(k: usize, depth: usize) -> Result<f64> {
    check_hadamard_order(k)?;
    if depth < 2 {
        return Err(UfmError::InvalidArgument(
            "threshold is undefined for L = 1".into(),
        ));
    }
    let l = depth as f64;
    let kf = k as f64;
    Ok((kf / (kf - 2.0)).powf((l + 1.0) / (l - 1.0)))
}

/// `a = [gamma, delta, gamma, ..., delta, gamma]`: odd modes get `gamma`,
/// even modes `delta`.
pub fn mixed_init(k: usize, depth: usize, gamma: f64, delta: f64) -> Result<SpectralState> {
    if !(gamma > 0.0 && delta > 0.0) {
        return Err(UfmError::InvalidArgument(format!(
            "gamma and delta must be positive, got {gamma}, {delta}"
        )));
    }
    let a = (1..k).map(|i| if i % 2 == 1 { gamma } else { delta }).collect();
    SpectralState::new(a, k, depth)
}

/// Unit-L1 direction with mass `2/K` on every odd mode.
pub fn cross_polytope_direction(k: usize) -> Vec<f64> {
    let w = 2.0 / k as f64;
    (1..k).map(|i| if i % 2 == 1 { w } else { 0.0 }).collect()
}

/// Unit-L1 uniform direction over `K - 1` modes.
pub fn uniform_direction(k: usize) -> Vec<f64> {
    vec![1.0 / (k as f64 - 1.0); k - 1]
}

/// Outcome of one [`stability_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// `d/dt ||a_hat - direction||_2` at the perturbed point.
    pub derivative: f64,
    pub distance: f64,
}

impl Probe {
    pub fn is_attracting(&self) -> bool {
        self.derivative < 0.0
    }
}

/// Perturbs `scale * direction` by a zero-sum vector of Euclidean norm
/// `perturbation` and returns the instantaneous rate of change of the
/// distance from `a_hat` to `direction`. Modes where `direction` vanishes
/// only receive positive perturbations, keeping the state positive.
pub fn stability_probe(
    direction: &[f64],
    scale: f64,
    depth: usize,
    perturbation: f64,
    seed: u64,
) -> Result<Probe> {
    let k = direction.len() + 1;
    check_hadamard_order(k)?;
    if let Some((index, &value)) = direction.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(UfmError::NegativeEntry { index, value });
    }
    let total: f64 = direction.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(UfmError::InvalidArgument(format!(
            "direction must sum to 1, got {total}"
        )));
    }
    if !(scale > 0.0 && perturbation > 0.0 && perturbation <= 1e-3 * scale) {
        return Err(UfmError::InvalidArgument(format!(
            "need 0 < perturbation <= 1e-3 * scale, got {perturbation} at scale {scale}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support: Vec<bool> = direction.iter().map(|&d| d > 0.0).collect();
    let mut p: Vec<f64> = support
        .iter()
        .map(|&on| {
            let g: f64 = StandardNormal.sample(&mut rng);
            if on {
                g
            } else {
                g.abs()
            }
        })
        .collect();
    // restore zero sum by shifting only the supported modes
    let on_count = support.iter().filter(|&&s| s).count() as f64;
    let shift = p.iter().sum::<f64>() / on_count;
    for (pi, &on) in p.iter_mut().zip(&support) {
        if on {
            *pi -= shift;
        }
    }
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a: Vec<f64> = direction
        .iter()
        .zip(&p)
        .map(|(d, pi)| scale * d + perturbation * pi / norm)
        .collect();
    let state = SpectralState::new(a, k, depth)?;
    Ok(distance_rate(&state, direction))
}

/// `d/dt ||a_hat - direction||_2` along the reduced flow, via
/// `d a_hat / dt = (a' - a_hat sum a') / ||a||_1`.
pub fn distance_rate(state: &SpectralState, direction: &[f64]) -> Probe {
    let sys = SpectralSystem::for_state(state);
    let da = sys.rhs(state.a());
    let s = state.l1_norm();
    let a_hat = state.normalized();
    let ds: f64 = da.iter().sum();
    let diff: Vec<f64> = a_hat.iter().zip(direction).map(|(x, d)| x - d).collect();
    let distance = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    let inner: f64 = diff
        .iter()
        .zip(da.iter().zip(&a_hat))
        .map(|(e, (d, h))| e * (d - h * ds) / s)
        .sum();
    Probe {
        derivative: inner / distance,
        distance,
    }
}
