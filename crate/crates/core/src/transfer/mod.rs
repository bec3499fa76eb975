//! The transfer operator with a hole: an Ulam discretization on the
//! interval and the tower-level operator.

mod checks;
mod power;
mod tower_op;
mod ulam;

pub use checks::{
    check_h1_h2, density_decomposition_check, eigenvalue_bound_check, DensityDecomposition,
    EigenvalueBounds, H1H2Verdict,
};
pub use power::{power_iterate, SpectralResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use tower_op::{
    build_tower_operator, project_density, tower_eigen, tower_pf_apply, FunctionalNorms,
    NormParams, ProjectedDensity, TowerFunction, TowerOperator, TowerSpectral,
};
pub use ulam::{build_ulam, build_ulam_on, CellMeasure, GridKind, SparseOperator, UlamGrid};
