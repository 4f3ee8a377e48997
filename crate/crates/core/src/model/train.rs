use serde::{Deserialize, Serialize};

use super::diagnostics::{RunLog, RunRow};
use super::flow::euler_step;
use super::loss::ce_loss;
use super::params::{ModelParams, ProblemSpec};
use crate::error::{Result, UfmError};

/// Default early-stopping loss.
pub const DEFAULT_STOP_LOSS: f64 = 1e-6;

/// Number of times a logging window may be retried with a halved step.
pub const MAX_HALVINGS: u32 = 30;

/// Two-phase gradient descent schedule: `epochs_phase1` steps with weight
/// decay `lambda_phase1`, then `epochs_phase2` unregularized steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub step_size: f64,
    pub epochs_phase1: u64,
    pub lambda_phase1: f64,
    pub epochs_phase2: u64,
    pub log_every: u64,
    #[serde(default = "default_stop")]
    pub stop_loss: Option<f64>,
}

fn default_stop() -> Option<f64> {
    Some(DEFAULT_STOP_LOSS)
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            step_size: 0.08,
            epochs_phase1: 0,
            lambda_phase1: 0.0,
            epochs_phase2: 1000,
            log_every: 100,
            stop_loss: default_stop(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(UfmError::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.lambda_phase1 >= 0.0) {
            return Err(UfmError::InvalidArgument(format!(
                "regularization must be nonnegative, got {}",
                self.lambda_phase1
            )));
        }
        if self.log_every == 0 {
            return Err(UfmError::InvalidArgument("log_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Copy with both phase lengths multiplied by `factor` (rounded, and at
    /// least one epoch when the phase was nonempty).
    pub fn scaled_epochs(&self, factor: f64) -> Self {
        let scale = |e: u64| {
            if e == 0 {
                0
            } else {
                ((e as f64 * factor).round() as u64).max(1)
            }
        };
        Self {
            epochs_phase1: scale(self.epochs_phase1),
            epochs_phase2: scale(self.epochs_phase2),
            ..*self
        }
    }

    pub fn total_epochs(&self) -> u64 {
        self.epochs_phase1 + self.epochs_phase2
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: RunLog,
    /// Step size in effect when training ended.
    pub final_step_size: f64,
    pub halvings: u32,
    pub stopped_early: bool,
}

fn objective(params: &ModelParams, spec: &ProblemSpec, lambda: f64) -> f64 {
    let ce = ce_loss(params, spec);
    if lambda == 0.0 {
        ce
    } else {
        ce + lambda * params.squared_norm_sum()
    }
}

/// Full-batch gradient descent (explicit Euler on the gradient flow).
///
/// Every logging window is checkpointed. If the window ends with a larger
/// objective than it started with, or produces non-finite values, it is
/// replayed from the checkpoint with half the step size.
pub fn train(params: ModelParams, spec: &ProblemSpec, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    spec.validate()?;
    schedule.validate()?;
    let mut params = params;
    let mut step = schedule.step_size;
    let mut halvings = 0u32;
    let mut epoch = 0u64;
    let mut log = RunLog::default();

    let loss0 = ce_loss(&params, spec);
    if !loss0.is_finite() {
        return Err(UfmError::Divergence {
            epoch: 0,
            reason: "initial loss is not finite".into(),
        });
    }
    log.rows.push(RunRow::measure(&params, spec, 0, loss0));
    if schedule.stop_loss.is_some_and(|s| loss0 < s) {
        return Ok(TrainOutcome {
            params,
            log,
            final_step_size: step,
            halvings,
            stopped_early: true,
        });
    }

    let phases = [
        (schedule.epochs_phase1, schedule.lambda_phase1),
        (schedule.epochs_phase2, 0.0),
    ];
    for (len, lambda) in phases {
        let phase_end = epoch + len;
        while epoch < phase_end {
            let window = schedule.log_every.min(phase_end - epoch);
            let checkpoint = params.clone();
            let start = objective(&params, spec, lambda);
            loop {
                let mut bad_epoch = None;
                for s in 0..window {
                    let loss = euler_step(&mut params, spec, lambda, step);
                    if !loss.is_finite() {
                        bad_epoch = Some(epoch + s);
                        break;
                    }
                }
                let end = if bad_epoch.is_none() && params.is_finite() {
                    objective(&params, spec, lambda)
                } else {
                    f64::NAN
                };
                if end.is_finite() && end <= start {
                    break;
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(UfmError::Divergence {
                        epoch: bad_epoch.unwrap_or(epoch + window),
                        reason: if end.is_nan() {
                            "loss became non-finite".into()
                        } else {
                            format!("objective rose from {start} to {end} at every step size")
                        },
                    });
                }
                step *= 0.5;
                params = checkpoint.clone();
            }
            epoch += window;
            let loss = ce_loss(&params, spec);
            log.rows.push(RunRow::measure(&params, spec, epoch, loss));
            if schedule.stop_loss.is_some_and(|s| loss < s) {
                return Ok(TrainOutcome {
                    params,
                    log,
                    final_step_size: step,
                    halvings,
                    stopped_early: true,
                });
            }
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        final_step_size: step,
        halvings,
        stopped_early: false,
    })
}
