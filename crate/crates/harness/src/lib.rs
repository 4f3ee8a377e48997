//! Experiment harness around `ufmlab-core`: JSON configs, built-in presets,
//! parallel sweeps with CSV/JSON artifacts, and the numerical acceptance
//! checks.

pub mod checks;
pub mod concentration;
pub mod config;
pub mod error;
mod geometry_report;
pub mod presets;
pub mod runner;

pub use checks::CheckReport;
pub use config::{ExperimentConfig, GeometryCheck};
pub use error::{HarnessError, Result};
pub use presets::{preset, PRESET_NAMES};
pub use runner::{run, RunOptions, RunReport};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/spectral.md")]
    struct Spectral;
    #[doc = include_str!("../../../book/src/stability.md")]
    struct Stability;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
