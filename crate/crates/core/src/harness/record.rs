//! Run records: what a finished run leaves behind for post-hoc verification.

use serde::{Deserialize, Serialize};

use crate::agreement::{DecisionRecord, ValidationRecord};
use crate::blackboard::{CellRecord, LastVector};
use crate::broadcast::AcceptRecord;
use crate::matching::{CapacitatedGraph, Capacity, FractionalMatching};

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessAccepts {
    pub process: u32,
    pub records: Vec<AcceptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizedBoard {
    pub t: u64,
    pub lastbar: LastVector,
    pub ordinal: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardRecord {
    pub process: u32,
    pub finalized: Vec<FinalizedBoard>,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochWeights {
    pub k: u64,
    /// Consensus weights; `None` where unknown to the recording process.
    pub weights: Vec<Option<f64>>,
}

/// A weight-update matching as `(i, j, value)` triples over `i <= j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingCheckpoint {
    pub k: u64,
    pub process: u32,
    pub n: usize,
    pub vertex_caps: Vec<f64>,
    /// `None` capacity means infinite.
    pub edges: Vec<(u32, u32, Option<f64>)>,
    pub mu: Vec<(u32, u32, f64)>,
}

impl MatchingCheckpoint {
    pub fn new(
        k: u64,
        process: u32,
        g: &CapacitatedGraph<f64>,
        mu: &FractionalMatching<f64>,
    ) -> Self {
        let n = g.n();
        let mut edges = Vec::new();
        let mut vals = Vec::new();
        for (i, j) in g.pairs() {
            match g.edge_cap(i, j) {
                Capacity::Finite(c) if *c == 0.0 => {}
                Capacity::Finite(c) => edges.push((i as u32, j as u32, Some(*c))),
                Capacity::Infinite => edges.push((i as u32, j as u32, None)),
            }
            let v = *mu.get(i, j);
            if v != 0.0 {
                vals.push((i as u32, j as u32, v));
            }
        }
        MatchingCheckpoint {
            k,
            process,
            n,
            vertex_caps: g.vertex_caps().to_vec(),
            edges,
            mu: vals,
        }
    }

    pub fn graph(&self) -> CapacitatedGraph<f64> {
        let mut g = CapacitatedGraph::empty(self.n);
        for (i, c) in self.vertex_caps.iter().enumerate() {
            g.set_vertex_cap(i, *c);
        }
        for &(i, j, c) in &self.edges {
            g.set_edge_cap(
                i as usize,
                j as usize,
                c.map_or(Capacity::Infinite, Capacity::Finite),
            );
        }
        g
    }

    pub fn matching(&self) -> FractionalMatching<f64> {
        FractionalMatching::from_pairs(
            self.n,
            self.mu.iter().map(|&(i, j, v)| (i as usize, j as usize, v)),
        )
    }
}

/// Everything verification needs from one run. Sections a run does not produce stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    pub m: usize,
    /// Allowed excess of good over bad weight loss.
    pub weight_slack: f64,
    pub bad: Vec<u32>,
    /// Good processes expected to decide.
    pub expected_deciders: Vec<u32>,
    /// Inputs of good processes.
    pub inputs: Vec<i64>,
    /// Whether the run ended with nothing left to deliver or compute.
    pub quiescent: bool,
    pub accepts: Vec<ProcessAccepts>,
    pub decisions: Vec<DecisionRecord>,
    /// Validated decision candidates seen by good processes.
    pub candidates: Vec<ValidationRecord>,
    pub boards: Vec<BoardRecord>,
    pub epochs: Vec<EpochWeights>,
    pub matchings: Vec<MatchingCheckpoint>,
}

impl RunRecord {
    pub fn empty(seed: u64, n: usize, f: usize, m: usize, weight_slack: f64) -> Self {
        RunRecord {
            schema: RECORD_SCHEMA,
            seed,
            n,
            f,
            m,
            weight_slack,
            bad: Vec::new(),
            expected_deciders: Vec::new(),
            inputs: Vec::new(),
            quiescent: false,
            accepts: Vec::new(),
            decisions: Vec::new(),
            candidates: Vec::new(),
            boards: Vec::new(),
            epochs: Vec::new(),
            matchings: Vec::new(),
        }
    }
}
