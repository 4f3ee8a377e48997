use std::io::Write;

use serde::{Deserialize, Serialize};

use super::state::{SpectralState, SpectralSystem};
use crate::error::{Result, UfmError};
use crate::linalg::{effective_rank_of, kl_to_uniform};
use crate::model::fmt_float;

/// Modes whose normalized value falls below this count as dead.
pub const DEAD_MODE_TOL: f64 = 1e-3;

/// Step-size control for [`integrate`]: an RK4 step is rejected and retried
/// with half the step when any mode changes by more than `max_rel_change`
/// (relative) or would become nonpositive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    pub initial_step: f64,
    pub max_rel_change: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: u64,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            max_rel_change: 0.01,
            min_step: 1e-14,
            max_step: f64::MAX,
            max_steps: 10_000_000,
        }
    }
}

/// One accepted integration point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub a: Vec<f64>,
    /// `da/dt` at this point; used for interpolation.
    pub velocity: Vec<f64>,
    pub l1_norm: f64,
    pub a_hat: Vec<f64>,
    pub kl: f64,
    pub eff_rank: f64,
}

impl TrajectoryRow {
    fn at(t: f64, a: Vec<f64>, velocity: Vec<f64>) -> Self {
        let l1_norm: f64 = a.iter().sum();
        let a_hat: Vec<f64> = a.iter().map(|x| x / l1_norm).collect();
        let kl = kl_to_uniform(&a_hat).unwrap_or(f64::NAN);
        let eff_rank = effective_rank_of(&a_hat).unwrap_or(f64::NAN);
        Self {
            t,
            a,
            velocity,
            l1_norm,
            a_hat,
            kl,
            eff_rank,
        }
    }

    /// Number of modes with `a_hat_i < DEAD_MODE_TOL`.
    pub fn dead_modes(&self) -> usize {
        self.a_hat.iter().filter(|&&x| x < DEAD_MODE_TOL).count()
    }
}

/// Time-ordered integration output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub k: usize,
    pub depth: usize,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn first(&self) -> &TrajectoryRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has the initial row")
    }

    pub fn final_state(&self) -> SpectralState {
        SpectralState::new(self.last().a.clone(), self.k, self.depth).expect("positivity kept")
    }

    /// Cubic Hermite interpolation of `a` at time `t` inside the covered span.
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        let rows = &self.rows;
        if t < rows[0].t || t > self.last().t {
            return None;
        }
        let idx = rows.partition_point(|r| r.t <= t);
        if idx == 0 {
            return Some(rows[0].a.clone());
        }
        if idx == rows.len() {
            return Some(self.last().a.clone());
        }
        let (r0, r1) = (&rows[idx - 1], &rows[idx]);
        let h = r1.t - r0.t;
        let s = (t - r0.t) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(
            (0..r0.a.len())
                .map(|i| {
                    h00 * r0.a[i] + h10 * h * r0.velocity[i] + h01 * r1.a[i] + h11 * h * r1.velocity[i]
                })
                .collect(),
        )
    }

    pub fn header(k: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..k).map(|i| format!("a_{i}")));
        h.extend(["l1_norm", "kl", "eff_rank"].map(String::from));
        h
    }

    /// CSV with columns `t,a_1..a_{K-1},l1_norm,kl,eff_rank`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| UfmError::InvalidArgument(format!("csv output: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.k)).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![fmt_float(r.t)];
            rec.extend(r.a.iter().map(|&x| fmt_float(x)));
            rec.extend([r.l1_norm, r.kl, r.eff_rank].map(fmt_float));
            w.write_record(rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| UfmError::InvalidArgument(format!("csv output: {e}")))?;
        Ok(())
    }
}

fn rk4(sys: &SpectralSystem, a: &[f64], k1: &[f64], h: f64) -> Vec<f64> {
    let shift = |c: f64, k: &[f64]| -> Vec<f64> { a.iter().zip(k).map(|(x, d)| x + c * d).collect() };
    let k2 = sys.rhs(&shift(0.5 * h, k1));
    let k3 = sys.rhs(&shift(0.5 * h, &k2));
    let k4 = sys.rhs(&shift(h, &k3));
    (0..a.len())
        .map(|i| a[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates the reduced dynamics from `state` up to `t_end`.
pub fn integrate(state: &SpectralState, t_end: f64, ctrl: &StepController) -> Result<Trajectory> {
    integrate_until(state, t_end, ctrl, |_| false)
}

/// Like [`integrate`], but also stops after the first accepted row for which
/// `stop` returns true.
pub fn integrate_until(
    state: &SpectralState,
    t_end: f64,
    ctrl: &StepController,
    mut stop: impl FnMut(&TrajectoryRow) -> bool,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(UfmError::InvalidArgument(format!(
            "end time must be positive, got {t_end}"
        )));
    }
    if !(ctrl.initial_step > 0.0 && ctrl.max_rel_change > 0.0) {
        return Err(UfmError::InvalidArgument("invalid step controller".into()));
    }
    let sys = SpectralSystem::for_state(state);
    let mut t = 0.0;
    let mut a = state.a().to_vec();
    let mut da = sys.rhs(&a);
    let mut rows = vec![TrajectoryRow::at(t, a.clone(), da.clone())];
    let mut h = ctrl.initial_step.min(ctrl.max_step);
    let mut steps = 0u64;

    while t < t_end && !stop(rows.last().expect("nonempty")) {
        if steps >= ctrl.max_steps {
            return Err(UfmError::StepUnderflow { t, h, state: a });
        }
        let step = h.min(t_end - t);
        let next = rk4(&sys, &a, &da, step);
        let change = next
            .iter()
            .zip(&a)
            .map(|(n, o)| ((n - o) / o).abs())
            .fold(0.0, f64::max);
        let positive = next.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive || change > ctrl.max_rel_change {
            h = step * 0.5;
            if h < ctrl.min_step * t.max(1.0) {
                return Err(UfmError::StepUnderflow { t, h, state: a });
            }
            continue;
        }
        steps += 1;
        t = if step == t_end - t { t_end } else { t + step };
        a = next;
        da = sys.rhs(&a);
        rows.push(TrajectoryRow::at(t, a.clone(), da.clone()));
        let grow = if change > 0.0 {
            (0.9 * ctrl.max_rel_change / change).min(2.0)
        } else {
            2.0
        };
        h = (step * grow.max(1.0)).min(ctrl.max_step);
    }
    Ok(Trajectory {
        k: state.k(),
        depth: state.depth(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_solution_matches_reference() {
        // K = 2, L = 1: da/dt = 2 a e^{-2a} / (1 + e^{-2a}) = 2a / (1 + e^{2a}).
        // Reference by a fine fixed-step RK4.
        let st = SpectralState::new(vec![0.1], 2, 1).unwrap();
        let traj = integrate(&st, 3.0, &StepController::default()).unwrap();
        let f = |a: f64| 2.0 * a / (1.0 + (2.0 * a).exp());
        let (mut a, h) = (0.1f64, 1e-4);
        for _ in 0..30_000 {
            let k1 = f(a);
            let k2 = f(a + 0.5 * h * k1);
            let k3 = f(a + 0.5 * h * k2);
            let k4 = f(a + h * k3);
            a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let got = traj.last().a[0];
        assert!((traj.last().t - 3.0).abs() < 1e-12);
        assert!((got - a).abs() < 1e-8 * a, "{got} vs {a}");
    }

    #[test]
    fn interpolation_hits_nodes_and_stays_between() {
        let st = SpectralState::new(vec![0.02, 0.01, 0.015], 4, 2).unwrap();
        let traj = integrate(&st, 20.0, &StepController::default()).unwrap();
        let r = &traj.rows[5];
        assert_eq!(traj.interpolate(r.t).unwrap(), r.a);
        let mid = 0.5 * (traj.rows[5].t + traj.rows[6].t);
        let v = traj.interpolate(mid).unwrap();
        for i in 0..3 {
            assert!(v[i] > traj.rows[5].a[i] && v[i] < traj.rows[6].a[i]);
        }
        assert!(traj.interpolate(25.0).is_none());
    }

    #[test]
    fn stop_predicate_and_csv() {
        let st = SpectralState::new(vec![0.5, 0.25, 0.25], 4, 1).unwrap();
        let traj = integrate_until(&st, 1e6, &StepController::default(), |r| r.l1_norm > 3.0).unwrap();
        assert!(traj.last().l1_norm > 3.0);
        assert!(traj.rows[traj.rows.len() - 2].l1_norm <= 3.0);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,a_1,a_2,a_3,l1_norm,kl,eff_rank\n"));
        assert_eq!(text.lines().count(), traj.rows.len() + 1);
    }

    #[test]
    fn bad_arguments() {
        let st = SpectralState::new(vec![0.5], 2, 1).unwrap();
        assert!(integrate(&st, 0.0, &StepController::default()).is_err());
        let ctrl = StepController {
            max_steps: 3,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&st, 1e3, &ctrl),
            Err(UfmError::StepUnderflow { .. })
        ));
    }
}
