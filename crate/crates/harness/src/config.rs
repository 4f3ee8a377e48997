//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufmlab_core::model::{ProblemSpec, TrainSchedule};
use ufmlab_core::spectral::StepController;

use crate::error::{io_at, HarnessError, Result};

/// One experiment: a base problem, what to do with it, and which variable
/// to sweep. Every `(sweep value, repetition)` pair is an independent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub spec: ProblemSpec,
    pub experiment: Experiment,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub repetitions: usize,
    /// Run `i` (in sweep-major order) uses seed `master_seed + i`.
    pub master_seed: u64,
    /// Relative to the output root.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// Gradient descent on the full model.
    Train { schedule: TrainSchedule, init: TrainInit },
    /// Integration of the reduced singular-value dynamics.
    Spectral {
        t_end: f64,
        init: SpectralInit,
        #[serde(default)]
        controller: StepController,
    },
    /// Distance between the initial logit velocity and the simplex direction.
    Concentration { eps: f64 },
    /// Closed-form geometry checks; no random runs.
    Geometry { check: GeometryCheck },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainInit {
    /// i.i.d. Gaussian entries with standard deviation `eps / sqrt(d)`.
    Random { eps: f64 },
    /// Balanced Hadamard-aligned factors with per-mode values `alpha`; the
    /// run seed drives the rotations.
    Hadamard { alpha: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralInit {
    /// Uniform `[0, 1)` entries rescaled to the given L1 norm.
    UniformRandom { l1_norm: f64 },
    /// `gamma` on odd modes, `delta` on even modes.
    Mixed { gamma: f64, delta: f64 },
    Explicit { a: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeometryCheck {
    /// Cross-polytope against simplex objectives over a depth/class grid.
    Thm1,
    /// Minimizer of the angular objective of the planar code.
    Thm2,
    /// Minimal support in the Hadamard basis.
    Rank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Depth,
    Width,
    Classes,
    /// Sets `K` and `d = K` together.
    ClassesAndWidth,
    /// The `eps` of a random or concentration initialization.
    InitScale,
}

impl SweepVariable {
    pub fn label(&self) -> &'static str {
        match self {
            SweepVariable::Depth => "depth",
            SweepVariable::Width => "width",
            SweepVariable::Classes => "classes",
            SweepVariable::ClassesAndWidth => "classes_and_width",
            SweepVariable::InitScale => "init_scale",
        }
    }
}

/// Thresholds recorded with every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Singular values below `zero_tol_rel * sigma_1` are ignored by the
    /// effective rank.
    pub zero_tol_rel: f64,
    /// A run is classified rank `r` only if `sigma_{r+1} <= rank_gap * sigma_1`.
    pub rank_gap: f64,
    /// Normalized spectral modes below this count as dead.
    pub dead_mode: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            zero_tol_rel: 1e-12,
            rank_gap: 1e-3,
            dead_mode: ufmlab_core::spectral::DEAD_MODE_TOL,
        }
    }
}

/// A concrete point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub spec: ProblemSpec,
    pub experiment: Experiment,
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(HarnessError::Config(format!("{what} must be a positive integer, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(HarnessError::Config("repetitions must be at least 1".into()));
        }
        if self.name.is_empty() {
            return Err(HarnessError::Config("name must not be empty".into()));
        }
        if self.output_dir.is_absolute()
            || self.output_dir.components().any(|c| matches!(c, std::path::Component::ParentDir))
        {
            return Err(HarnessError::Config(format!(
                "output_dir {:?} must be relative and stay below the output root",
                self.output_dir
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(HarnessError::Config("sweep values must not be empty".into()));
            }
        }
        match &self.experiment {
            Experiment::Train { schedule, .. } => schedule.validate()?,
            Experiment::Spectral { t_end, .. } if !(*t_end > 0.0) => {
                return Err(HarnessError::Config(format!("t_end must be positive, got {t_end}")))
            }
            Experiment::Concentration { eps } if !(*eps > 0.0) => {
                return Err(HarnessError::Config(format!("eps must be positive, got {eps}")))
            }
            _ => {}
        }
        // resolve every point once so bad sweep values fail before any run
        self.points().map(|_| ())
    }

    /// All sweep points in order; a config without a sweep has one point.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let Some(sweep) = &self.sweep else {
            self.spec.validate()?;
            return Ok(vec![SweepPoint {
                value: None,
                spec: self.spec,
                experiment: self.experiment.clone(),
            }]);
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut spec = self.spec;
                let mut experiment = self.experiment.clone();
                match sweep.variable {
                    SweepVariable::Depth => spec.depth = as_count(v, "depth")?,
                    SweepVariable::Width => spec.d = as_count(v, "width")?,
                    SweepVariable::Classes => spec.k = as_count(v, "class count")?,
                    SweepVariable::ClassesAndWidth => {
                        spec.k = as_count(v, "class count")?;
                        spec.d = spec.k;
                    }
                    SweepVariable::InitScale => match &mut experiment {
                        Experiment::Train { init: TrainInit::Random { eps }, .. }
                        | Experiment::Concentration { eps } => *eps = v,
                        _ => {
                            return Err(HarnessError::Config(
                                "init_scale sweeps need a random initialization".into(),
                            ))
                        }
                    },
                }
                spec.validate()?;
                Ok(SweepPoint {
                    value: Some(v),
                    spec,
                    experiment,
                })
            })
            .collect()
    }

    /// Same config with both training phases scaled by `factor`.
    pub fn with_scaled_epochs(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(HarnessError::Config(format!(
                "epoch scale must be positive, got {factor}"
            )));
        }
        let mut out = self.clone();
        if let Experiment::Train { schedule, .. } = &mut out.experiment {
            *schedule = schedule.scaled_epochs(factor);
        }
        Ok(out)
    }
}
