//! Epoch accounting and the per-process weight book.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::blackboard::{Blackboard, LastVector};
use crate::matching::{local_update, reconcile_one};
use crate::params::ProtocolParams;
use crate::sim::ProcessId;
use crate::stats::{EpochStats, StatsAccumulator};

/// Maps iterations to epochs, with weights reset every `k_max` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub t_iters: u64,
    pub k_max: u64,
}

impl EpochSchedule {
    pub fn new(params: &ProtocolParams) -> Self {
        EpochSchedule {
            t_iters: params.t_iters.max(1) as u64,
            k_max: params.k_max.max(1) as u64,
        }
    }

    pub fn epoch_of(&self, t: u64) -> u64 {
        (t.max(1) - 1) / self.t_iters + 1
    }

    /// Boards of epoch `k`.
    pub fn boards(&self, k: u64) -> std::ops::RangeInclusive<u64> {
        (k - 1) * self.t_iters + 1..=k * self.t_iters
    }

    /// Whether epoch `k` starts over with all weights 1.
    pub fn is_restart(&self, k: u64) -> bool {
        (k - 1).is_multiple_of(self.k_max)
    }

    /// How many restarts happened before epoch `k`.
    pub fn restarts_before(&self, k: u64) -> u64 {
        (k - 1) / self.k_max
    }
}

/// [`EpochState`]-style summary for logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochState {
    pub k: u64,
    pub t: u64,
    pub weights: Vec<Option<f64>>,
    pub restarts: u64,
}

/// Consensus weights as one process derives them from its blackboard.
///
/// The weight of `i` in epoch `k` is `i`'s own view of it after epoch `k - 1`,
/// reconstructed from `i`'s row-0 write on the first board of epoch `k`.
#[derive(Debug, Clone)]
pub struct WeightBook {
    schedule: EpochSchedule,
    n: usize,
    cache: HashMap<(u64, u32), Option<f64>>,
    /// Own local update per finished epoch: (stats, new local weights).
    own: HashMap<u64, (EpochStats, Vec<f64>)>,
}

impl WeightBook {
    pub fn new(params: &ProtocolParams) -> Self {
        WeightBook {
            schedule: EpochSchedule::new(params),
            n: params.n,
            cache: HashMap::new(),
            own: HashMap::new(),
        }
    }

    pub fn schedule(&self) -> EpochSchedule {
        self.schedule
    }

    /// Consensus weight of `i` in epoch `k`; `None` if `i` left no trace of it here.
    pub fn consensus(
        &mut self,
        bb: &Blackboard,
        params: &ProtocolParams,
        k: u64,
        i: ProcessId,
    ) -> Option<f64> {
        if self.schedule.is_restart(k) {
            return Some(1.0);
        }
        if let Some(w) = self.cache.get(&(k, i.0)) {
            return *w;
        }
        let first = *self.schedule.boards(k).start();
        let w = match bb.history_of_writer(i, first) {
            Ok(bar) => {
                let bar = bar.clone();
                let local = self.local_view(bb, params, k - 1, &bar);
                Some(reconcile_one(local.1[i.index()], params.w_min()))
            }
            Err(_) => None,
        };
        self.cache.insert((k, i.0), w);
        w
    }

    /// Consensus weights of epoch `k`, unknown entries as `None`.
    pub fn consensus_vector(
        &mut self,
        bb: &Blackboard,
        params: &ProtocolParams,
        k: u64,
    ) -> Vec<Option<f64>> {
        (0..self.n as u32)
            .map(|i| self.consensus(bb, params, k, ProcessId(i)))
            .collect()
    }

    /// Stats and local weights after epoch `k` as seen by whoever fixed view `bar`.
    pub fn local_view(
        &mut self,
        bb: &Blackboard,
        params: &ProtocolParams,
        k: u64,
        bar: &LastVector,
    ) -> (EpochStats, Vec<f64>) {
        let w: Vec<f64> = self
            .consensus_vector(bb, params, k)
            .into_iter()
            .map(|w| w.unwrap_or(0.0))
            .collect();
        let mut acc = StatsAccumulator::new(&w);
        for t in self.schedule.boards(k) {
            acc.push(&bb.column_sums(bar, t, params.x_max()));
        }
        let stats = acc.finish(k, params);
        let update = local_update(&w, &stats, params);
        (stats, update.weights)
    }

    /// This process's own update after epoch `k`, computed once from its final view.
    pub fn own_update(
        &mut self,
        bb: &Blackboard,
        params: &ProtocolParams,
        k: u64,
    ) -> Option<&(EpochStats, Vec<f64>)> {
        if !self.own.contains_key(&k) {
            let last = *self.schedule.boards(k).end();
            let bar = bb.lastbar(last)?.clone();
            let r = self.local_view(bb, params, k, &bar);
            self.own.insert(k, r);
        }
        self.own.get(&k)
    }
}
