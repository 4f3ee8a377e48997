//! Competing max-margin logit geometries and their balanced factorizations,
//! plus the angular objectives of the two-dimensional softmax code.

mod angles;
mod constructions;
mod kgon;

pub use angles::{gram_factor_angles, PSD_TOL, RANK_TWO_TOL};
pub use constructions::{
    balanced_factorization, cross_polytope_construction, cross_polytope_matrix,
    cross_polytope_minimal_scale, dnc_construction, dnc_minimal_scale, kgon_code,
    kgon_minimal_radius, margin_feasible, max_margin_objective, norm_propagation_ratio,
    ConstructionKind, ConstructionSummary, GeometryConstruction, DEFAULT_FILL_SEED, MARGIN_TOL,
};
pub use kgon::{kgon_objective, max_cos_sum};
