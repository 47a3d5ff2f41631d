//! Excess graphs and the weight update built on them.

use serde::{Deserialize, Serialize};

use super::graph::{CapacitatedGraph, Capacity};
use super::rising_tide::{rising_tide, FractionalMatching};
use crate::params::ProtocolParams;
use crate::sim::ProcessId;
use crate::stats::EpochStats;

/// Excess graph capacities before clamping: vertex capacity is the weight, the
/// self-loop carries the scaled dev excess, and each pair twice the scaled corr excess.
pub fn excess_capacities(
    weights: &[f64],
    stats: &EpochStats,
    params: &ProtocolParams,
) -> CapacitatedGraph<f64> {
    let n = weights.len();
    let scale = params.excess_scale();
    let mut g = CapacitatedGraph::empty(n);
    for i in 0..n {
        g.set_vertex_cap(i, weights[i]);
        let dev_excess = (stats.dev[i] - weights[i] * weights[i] * stats.alpha_t).max(0.0);
        g.set_edge_cap(i, i, Capacity::Finite(scale * dev_excess));
        for j in i + 1..n {
            let corr_excess = (stats.corr(i, j) - weights[i] * weights[j] * stats.beta_t).max(0.0);
            g.set_edge_cap(i, j, Capacity::Finite(scale * 2.0 * corr_excess));
        }
    }
    g
}

/// [`excess_capacities`] with every edge clamped to its smaller endpoint weight,
/// which leaves the tide's output unchanged.
pub fn build_excess_graph(
    weights: &[f64],
    stats: &EpochStats,
    params: &ProtocolParams,
) -> CapacitatedGraph<f64> {
    let mut g = excess_capacities(weights, stats, params);
    g.clamp_edges_to_vertices();
    g
}

/// `w_i - sum_j mu(i, j)`, floored at zero against rounding.
pub fn weight_update_local(weights: &[f64], mu: &FractionalMatching<f64>) -> Vec<f64> {
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| (w - mu.load(i)).max(0.0))
        .collect()
}

/// One viewer's full update for an epoch: graph, matching, and new local weights.
#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub graph: CapacitatedGraph<f64>,
    pub matching: FractionalMatching<f64>,
    pub weights: Vec<f64>,
}

pub fn local_update(weights: &[f64], stats: &EpochStats, params: &ProtocolParams) -> LocalUpdate {
    let graph = build_excess_graph(weights, stats, params);
    let (matching, _) = rising_tide(&graph).expect("excess capacities are non-negative");
    let weights = weight_update_local(weights, &matching);
    LocalUpdate {
        graph,
        matching,
        weights,
    }
}

/// A process's own weight as everyone adopts it: kept if strictly above `w_min`.
pub fn reconcile_one(own_view: f64, w_min: f64) -> f64 {
    if own_view > w_min {
        own_view
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciledWeights {
    /// Consensus weights; unresolved entries are 0.
    pub w: Vec<f64>,
    /// Processes whose own view is unknown and which are excluded from weighted sums.
    pub unresolved: Vec<ProcessId>,
}

/// Consensus weights from each process's view of its own weight.
pub fn reconcile_weights(own_views: &[Option<f64>], w_min: f64) -> ReconciledWeights {
    let mut unresolved = Vec::new();
    let w = own_views
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(x) => reconcile_one(*x, w_min),
            None => {
                unresolved.push(ProcessId(i as u32));
                0.0
            }
        })
        .collect();
    ReconciledWeights { w, unresolved }
}
