//! Reduced singular-value dynamics for Hadamard-aligned initializations:
//! the `Psi` coupling, the ODE and its linearization, an adaptive RK4
//! integrator, stability probes and the Hadamard-basis minimal-rank search.

mod integrate;
mod rank;
mod stability;
mod state;

pub use integrate::{
    integrate, integrate_until, StepController, Trajectory, TrajectoryRow, DEAD_MODE_TOL,
};
pub use rank::{gf2_rank, min_feasible_rank, spans_full_space, support_gap, MinRank, MAX_SEARCH_CLASSES};
pub use stability::{
    cross_polytope_direction, distance_rate, dnc_stability_threshold, kl_divergence_threshold,
    mixed_init, stability_probe, uniform_direction, Probe,
};
pub use state::{
    growth_exponent, hadamard_softmax_modes, linearized_rhs, psi_matrix, scale_map, spectral_rhs,
    PsiMatrix, RhsParts, ScaleMap, SpectralState, SpectralSystem,
};
