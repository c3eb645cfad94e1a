//! Discrete Kantorovich problem: measures, an exact solver, c-transforms,
//! map extraction and Monge–Ampère residuals on grids.

mod ctransform;
mod grid;
mod map;
mod measure;
mod simplex;
mod solve;

pub use ctransform::{c_transform, c_transform_target, CTransform, CTransformer, TIE_TOL};
pub use grid::{GridFunction, RegularGrid};
pub use map::{extract_map, ma_residual, GradientCheck, MaResidual, MapExtraction, MapValue, MAP_TIE_REL};
pub use measure::{normalize_and_validate, DiscreteMeasure, MeasureSummary, WeightedCloud, BALANCE_TOL, TOTAL_TOL};
pub use solve::{
    cost_matrix, solve_discrete, solve_discrete_with, Lattice, PlanEntry, PotentialPair, Solution, SolveSummary,
    SolverOptions, TransportPlan, DEFAULT_MAX_POINTS, MAX_RESOLUTION,
};
