//! Built-in experiment recipes, one per reproduced figure or check.

use ufmlab_core::model::{ProblemSpec, TrainSchedule};
use ufmlab_core::spectral::StepController;

use crate::config::{
    Experiment, ExperimentConfig, GeometryCheck, SpectralInit, Sweep, SweepVariable, Tolerances,
    TrainInit,
};
use crate::error::{HarnessError, Result};

pub const PRESET_NAMES: [&str; 11] = [
    "fig2",
    "fig3-angles",
    "fig3-margins",
    "fig4-velocity",
    "fig4-rank",
    "fig6-hadamard",
    "fig8-kl",
    "thm1-grid",
    "thm2-kgon",
    "prop-rank",
    "concentration",
];

/// Random-init scale for the depth sweep. Small enough to start near the
/// origin, large enough that `L = 4` leaves the saddle in a few thousand
/// epochs.
pub const FIG2_EPS: f64 = 0.3;

/// Init scale for the `L = 10`, `d = K` runs: unit-variance entries keep the
/// deep product away from the origin saddle.
pub const FIG3_EPS: f64 = 1.0;

fn spec(k: usize, n: usize, d: usize, depth: usize) -> ProblemSpec {
    ProblemSpec { k, n, d, depth }
}

/// Warm start with weight decay, then unregularized training.
fn warm_start() -> TrainSchedule {
    TrainSchedule {
        step_size: 0.08,
        epochs_phase1: 200_000,
        lambda_phase1: 1e-3,
        epochs_phase2: 100_000,
        log_every: 1000,
        stop_loss: None,
    }
}

fn base(name: &str, spec: ProblemSpec, experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        spec,
        experiment,
        sweep: None,
        repetitions: 1,
        master_seed: 0,
        output_dir: name.into(),
        tolerances: Tolerances::default(),
    }
}

fn sweep(variable: SweepVariable, values: &[f64]) -> Option<Sweep> {
    Some(Sweep {
        variable,
        values: values.to_vec(),
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = match name {
        "fig2" => {
            let mut c = base(
                name,
                spec(10, 5, 100, 1),
                Experiment::Train {
                    schedule: TrainSchedule {
                        epochs_phase2: 200_000,
                        log_every: 1000,
                        ..TrainSchedule::default()
                    },
                    init: TrainInit::Random { eps: FIG2_EPS },
                },
            );
            c.sweep = sweep(SweepVariable::Depth, &[1.0, 2.0, 3.0, 4.0]);
            c.repetitions = 5;
            c
        }
        "fig3-angles" => {
            let mut c = base(
                name,
                spec(8, 5, 8, 10),
                Experiment::Train {
                    schedule: warm_start(),
                    init: TrainInit::Random { eps: FIG3_EPS },
                },
            );
            c.sweep = sweep(
                SweepVariable::ClassesAndWidth,
                &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
            );
            c.repetitions = 5;
            c
        }
        "fig3-margins" => {
            let mut c = base(
                name,
                spec(8, 5, 8, 4),
                Experiment::Train {
                    schedule: warm_start(),
                    init: TrainInit::Random { eps: FIG3_EPS },
                },
            );
            c.sweep = sweep(SweepVariable::Width, &[8.0, 10.0, 12.0, 16.0, 24.0]);
            c.repetitions = 5;
            c
        }
        "fig4-velocity" => {
            let mut c = base(name, spec(10, 5, 64, 3), Experiment::Concentration { eps: 0.01 });
            c.sweep = sweep(
                SweepVariable::Width,
                &[16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0],
            );
            c.repetitions = 5;
            c
        }
        "fig4-rank" => {
            let mut c = base(
                name,
                spec(10, 5, 100, 3),
                Experiment::Train {
                    schedule: TrainSchedule {
                        epochs_phase2: 200_000,
                        log_every: 1000,
                        ..TrainSchedule::default()
                    },
                    init: TrainInit::Random { eps: 0.03 },
                },
            );
            c.sweep = sweep(SweepVariable::Width, &[25.0, 50.0, 100.0, 200.0]);
            c.repetitions = 5;
            c
        }
        "fig6-hadamard" => {
            let mut c = base(
                name,
                spec(16, 1, 16, 2),
                Experiment::Spectral {
                    t_end: 1e3,
                    init: SpectralInit::UniformRandom { l1_norm: 1e-3 },
                    controller: StepController::default(),
                },
            );
            c.repetitions = 5;
            c
        }
        "fig8-kl" => base(
            name,
            spec(16, 1, 16, 2),
            Experiment::Spectral {
                t_end: 1e3,
                init: SpectralInit::Mixed {
                    gamma: 0.2,
                    delta: 0.1,
                },
                controller: StepController::default(),
            },
        ),
        "thm1-grid" => base(
            name,
            spec(4, 1, 12, 2),
            Experiment::Geometry {
                check: GeometryCheck::Thm1,
            },
        ),
        "thm2-kgon" => base(
            name,
            spec(3, 1, 12, 2),
            Experiment::Geometry {
                check: GeometryCheck::Thm2,
            },
        ),
        "prop-rank" => base(
            name,
            spec(16, 1, 16, 2),
            Experiment::Geometry {
                check: GeometryCheck::Rank,
            },
        ),
        "concentration" => {
            let mut c = base(name, spec(10, 5, 64, 3), Experiment::Concentration { eps: 0.01 });
            c.sweep = sweep(SweepVariable::Width, &[64.0, 256.0, 1024.0]);
            c.repetitions = 5;
            c
        }
        other => return Err(HarnessError::UnknownPreset(other.into())),
    };
    c.name = name.into();
    c.validate()?;
    Ok(c)
}

/// Presets backing each rendered figure.
pub fn figure_presets(figure: &str) -> Option<&'static [&'static str]> {
    Some(match figure {
        "fig2" => &["fig2"],
        "fig3" => &["fig3-angles", "fig3-margins"],
        "fig4" => &["fig4-velocity", "fig4-rank"],
        "fig6" => &["fig6-hadamard"],
        "fig8" => &["fig8-kl"],
        _ => return None,
    })
}
