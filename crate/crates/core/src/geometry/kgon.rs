use std::f64::consts::PI;

use crate::error::{Result, UfmError};

fn check_gap(delta: f64, k: usize) -> Result<()> {
    if k < 3 {
        return Err(UfmError::InvalidArgument(format!(
            "angular objectives need K >= 3, got {k}"
        )));
    }
    let upper = 2.0 * PI / k as f64;
    // allow rounding at the upper end of the interval
    if !(delta > 0.0 && delta <= upper * (1.0 + 1e-12)) {
        return Err(UfmError::InvalidArgument(format!(
            "gap {delta} outside (0, 2 pi / {k}]"
        )));
    }
    Ok(())
}

/// Largest `sum_u cos(2 theta_u)` over `K` angles whose circular gaps are all at
/// least `delta`.
pub fn max_cos_sum(k: usize, delta: f64) -> Result<f64> {
    check_gap(delta, k)?;
    let easy = k.is_multiple_of(2) || delta <= 2.0 * PI / (k as f64 + 1.0);
    let s = delta.sin();
    Ok(if easy {
        let hi = k.div_ceil(2) as f64;
        let lo = (k / 2) as f64;
        ((hi * delta).sin() + (lo * delta).sin()) / s
    } else {
        (k as f64 * delta).sin().abs() / s
    })
}

/// Least value of the normalized Gram objective for `K` unit-margin points on a
/// circle with minimal gap `delta`: `(K^2 - M^2) / (4 (1 - cos delta)^2)` where
/// `M` is [`max_cos_sum`].
pub fn kgon_objective(delta: f64, k: usize) -> Result<f64> {
    let m = max_cos_sum(k, delta)?;
    let kf = k as f64;
    let c = 1.0 - delta.cos();
    Ok((kf * kf - m * m) / (4.0 * c * c))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two arcs of `r` and `K - r` points at spacing `delta`, offset by `nu`.
    fn cluster_oracle(k: usize, delta: f64) -> f64 {
        let s = delta.sin();
        let span = 2.0 * PI - k as f64 * delta;
        let mut best = f64::NEG_INFINITY;
        for r in 0..=k {
            let a = (r as f64 * delta).sin() / s;
            let b = ((k - r) as f64 * delta).sin() / s;
            for step in 0..=2000 {
                let nu = -span + 2.0 * span * step as f64 / 2000.0;
                let re = a + b * nu.cos();
                let im = b * nu.sin();
                best = best.max((re * re + im * im).sqrt());
            }
        }
        best
    }

    #[test]
    fn limits_and_examples() {
        assert!((max_cos_sum(4, PI / 2.0).unwrap()).abs() < 1e-15);
        for k in 3..9 {
            assert!((max_cos_sum(k, 1e-7).unwrap() - k as f64).abs() < 1e-6);
        }
        assert!(max_cos_sum(4, 2.0).is_err());
        assert!(max_cos_sum(2, 0.1).is_err());
        assert!(kgon_objective(1e-6, 6).unwrap() > 1e6);
    }

    #[test]
    fn matches_cluster_oracle() {
        for k in 3..=6 {
            let top = 2.0 * PI / k as f64;
            for i in 1..=50 {
                let delta = top * i as f64 / 50.0;
                let got = max_cos_sum(k, delta).unwrap();
                let want = cluster_oracle(k, delta);
                assert!((got - want).abs() < 1e-6, "K={k} delta={delta}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn even_objective_is_decreasing() {
        for k in [4usize, 6, 8] {
            let top = 2.0 * PI / k as f64;
            let mut prev = f64::INFINITY;
            let mut d = 1e-4;
            while d <= top {
                let v = kgon_objective(d, k).unwrap();
                assert!(v < prev, "K={k} at {d}");
                prev = v;
                d += 1e-4;
            }
        }
    }
}
