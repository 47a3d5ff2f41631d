//! Rising-tide maximal fractional matching on capacitated graphs, plus the
//! weight updates derived from it.

mod fixture;
mod graph;
mod lipschitz;
mod rising_tide;
mod scalar;
mod weights;

use thiserror::Error;

pub use fixture::{parse_graph, write_graph, write_matching};
pub use graph::{CapacitatedGraph, Capacity};
pub use lipschitz::{lipschitz_defect, Defect};
pub use rising_tide::{
    check_feasible, check_maximal, rising_tide, Cause, DependencyArc, DependencyGraph,
    FractionalMatching, FreezeStep,
};
pub use scalar::{Scalar, F64_TOL};
pub use weights::{
    build_excess_graph, excess_capacities, local_update, reconcile_one, reconcile_weights,
    weight_update_local, LocalUpdate, ReconciledWeights,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("negative capacity on {what}")]
    NegativeCapacity { what: String },
    #[error("vertex sets differ: {left} vs {right}")]
    VertexSetMismatch { left: usize, right: usize },
    #[error("fixture line {line}: {msg}")]
    Fixture { line: usize, msg: String },
}
