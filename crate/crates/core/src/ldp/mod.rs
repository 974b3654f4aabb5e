//! Large-deviation rate functionals: the pointwise cost `j(π, r)`, the path
//! functional `J(x, ρ)`, its tilted lower bounds `J_V`, and the path space
//! of mechanical/occupation pairs.

mod j;
mod path;

use thiserror::Error;

pub use j::{
    balance_defect, j_edge, j_general, j_hat, j_reversible, j_two_state, phi, stationarity_residual, EdgeVector,
    JSolution, OptimizerPoint, NEWTON_MAX_ITER, STATIONARITY_TOL,
};
pub use path::{
    optimal_tilt, path_rate_J, rate_sweep, rate_sweep_csv, reconstruct_mechanical_path, tilted_rate_JV,
    upsilon_distance, PathPair, SweepRow,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpError {
    #[error("edge vector is invalid: {0}")]
    BadEdgeVector(String),
    #[error("damped Newton did not converge after {iterations} steps (stationarity residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("rates are not reversible with respect to the supplied measure")]
    NotReversible,
    #[error("paths live on different grids or shapes")]
    GridMismatch,
    #[error("invalid path pair: {0}")]
    BadPath(String),
    #[error("at t = {t}: {source}")]
    AtTime { t: f64, source: Box<LdpError> },
    #[error("no interior optimizer at t = {t}: the edge vector is reducible")]
    NoOptimizer { t: f64 },
    #[error("mechanical path reconstruction failed: {0}")]
    Ode(#[from] crate::ode::OdeError),
}
