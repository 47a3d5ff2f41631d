//! Weighted coin-flipping game over an abstracted blackboard.
//!
//! Each iteration every column receives up to `m` coins. The adversary may make
//! the last written cell of up to `f` columns ambiguous, hiding it from a subset
//! of good viewers; every other cell is seen identically by everyone. Each good
//! viewer flips the weighted coin from its own view, accumulates its own epoch
//! statistics and computes its own weight update.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{local_update, reconcile_one};
use crate::params::{ProtocolParams, Sign};
use crate::sim::{stream_rng, ProcessId, ProcessSet, ADVERSARY_STREAM};
use crate::stats::{clamp_sum, EpochStats, StatsAccumulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub params: ProtocolParams,
    pub epochs: u64,
    /// Value some good process is about to decide; the adversary pushes against it.
    pub candidate: Option<Sign>,
    /// Pin every corrupted process's consensus weight to 0.
    pub force_bad_weights_zero: bool,
    /// End the run at the first iteration where all good coins equal `-sigma`.
    pub stop_on_agreement: bool,
}

impl GameConfig {
    pub fn new(params: ProtocolParams, epochs: u64) -> Self {
        GameConfig {
            params,
            epochs,
            candidate: None,
            force_bad_weights_zero: false,
            stop_on_agreement: false,
        }
    }
}

/// What the adversary sees when acting on one board.
#[derive(Debug)]
pub struct GameView<'a> {
    pub t: u64,
    pub k: u64,
    pub params: &'a ProtocolParams,
    pub weights: &'a [f64],
    pub bad: ProcessSet,
    pub sigma: Sign,
    /// Written cells per column so far; bad columns are empty before their writes.
    pub columns: &'a [Vec<Sign>],
}

impl GameView<'_> {
    /// Weighted clamped sum over `cols` of the current columns.
    pub fn weighted_sum(&self, cols: impl Iterator<Item = usize>) -> f64 {
        cols.map(|i| self.weights[i] * column_value(&self.columns[i], self.params.x_max()))
            .sum()
    }

    pub fn good(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.params.n).filter(|&i| !self.bad.contains(ProcessId(i as u32)))
    }
}

/// The last cell of `column` is hidden from `hidden_from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ambiguity {
    pub column: ProcessId,
    pub hidden_from: ProcessSet,
}

pub trait GameAdversary {
    /// Processes corrupted before the first iteration.
    fn corrupt(&mut self, _params: &ProtocolParams, _rng: &mut ChaCha20Rng) -> ProcessSet {
        ProcessSet::default()
    }

    /// Adversarial direction for iteration `t`, fixed before any good write.
    fn direction(&mut self, _t: u64, candidate: Option<Sign>) -> Sign {
        candidate.map_or(Sign::Pos, Sign::flip)
    }

    /// Cells for each bad column (in increasing id order), at most `m` each.
    fn bad_writes(&mut self, view: &GameView<'_>, rng: &mut ChaCha20Rng) -> Vec<Vec<Sign>> {
        let m = view.params.m;
        view.bad
            .iter()
            .map(|_| (0..m).map(|_| random_sign(rng)).collect())
            .collect()
    }

    /// Ambiguous last cells once every column is written.
    fn ambiguity(&mut self, _view: &GameView<'_>, _rng: &mut ChaCha20Rng) -> Vec<Ambiguity> {
        Vec::new()
    }
}

pub fn random_sign(rng: &mut impl Rng) -> Sign {
    if rng.gen::<bool>() {
        Sign::Pos
    } else {
        Sign::Neg
    }
}

/// Clamped sum of a column.
pub fn column_value(col: &[Sign], x_max: f64) -> f64 {
    clamp_sum(col.iter().map(|s| s.value()).sum(), x_max)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("adversary corrupted {got} processes, budget {f}")]
    Budget { got: usize, f: usize },
    #[error("bad column {column} got {len} cells, at most {m} allowed")]
    TooManyCells { column: u32, len: usize, m: usize },
    #[error("adversary returned {got} bad columns for {want} bad processes")]
    BadColumns { got: usize, want: usize },
    #[error("{got} ambiguous cells on board {t}, at most {f} allowed")]
    TooAmbiguous { t: u64, got: usize, f: usize },
    #[error("ambiguous cell on board {t} in column {column} which is empty or repeated")]
    BadAmbiguity { t: u64, column: u32 },
}

/// Per-epoch accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub k: u64,
    /// Consensus weights used during the epoch.
    pub weights: Vec<f64>,
    /// Consensus weights installed after it.
    pub next_weights: Vec<f64>,
    /// Statistics of the undistorted board.
    pub stats: EpochStats,
    pub good_loss: f64,
    pub bad_loss: f64,
    /// Good weight loss bounded by bad weight loss plus the allowed slack.
    pub invariant_ok: bool,
    /// Good processes some good viewer zeroed but whose consensus weight stayed positive.
    pub zero_view_violations: usize,
    /// Largest gap between two good viewers' local weight for the same process.
    pub max_view_gap: f64,
    /// Weights were reset to 1 after this epoch.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    pub sigma: i64,
    pub s_good: f64,
    pub s_bad: f64,
    /// Number of good viewers whose coin came out `+1`.
    pub pos_coins: u32,
    pub good_viewers: u32,
}

impl IterationRecord {
    pub fn coins_agree(&self) -> bool {
        self.pos_coins == 0 || self.pos_coins == self.good_viewers
    }

    /// Every good coin equals `-sigma`.
    pub fn against_sigma(&self) -> bool {
        let want = if self.sigma > 0 { 0 } else { self.good_viewers };
        self.pos_coins == want
    }

    /// Every good coin equals `sigma`.
    pub fn with_sigma(&self) -> bool {
        let want = if self.sigma > 0 { self.good_viewers } else { 0 };
        self.pos_coins == want
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub bad: Vec<u32>,
    pub epochs: Vec<EpochRecord>,
    pub iterations: Vec<IterationRecord>,
    /// First iteration where all good coins equalled `-sigma`.
    pub first_agreement: Option<u64>,
}

impl GameOutcome {
    pub fn bad_weight(&self, epoch_idx: usize) -> f64 {
        let w = &self.epochs[epoch_idx].next_weights;
        self.bad.iter().map(|&i| w[i as usize]).sum()
    }
}

struct Viewer {
    acc: StatsAccumulator,
}

/// Plays `cfg.epochs` epochs of `T` iterations each.
pub fn run_game(
    cfg: &GameConfig,
    adv: &mut dyn GameAdversary,
    seed: u64,
) -> Result<GameOutcome, GameError> {
    let params = &cfg.params;
    let (n, f, m) = (params.n, params.f, params.m);
    let x_max = params.x_max();
    let mut adv_rng = stream_rng(seed, ADVERSARY_STREAM);
    let mut coin_rngs: Vec<ChaCha20Rng> = (0..n as u64).map(|i| stream_rng(seed, i + 1)).collect();
    let bad = adv.corrupt(params, &mut adv_rng);
    if bad.len() > f {
        return Err(GameError::Budget { got: bad.len(), f });
    }
    let good: Vec<usize> = (0..n)
        .filter(|&i| !bad.contains(ProcessId(i as u32)))
        .collect();
    let mut good_set = ProcessSet::default();
    for &i in &good {
        good_set.insert(ProcessId(i as u32));
    }
    let is_bad = |i: usize| bad.contains(ProcessId(i as u32));
    let zero_bad = |w: &mut Vec<f64>| {
        if cfg.force_bad_weights_zero {
            for (i, x) in w.iter_mut().enumerate() {
                if is_bad(i) {
                    *x = 0.0;
                }
            }
        }
    };
    let mut weights = vec![1.0; n];
    zero_bad(&mut weights);
    let mut out = GameOutcome {
        bad: bad.iter().map(|p| p.0).collect(),
        epochs: Vec::new(),
        iterations: Vec::new(),
        first_agreement: None,
    };
    let t_iters = params.t_iters as u64;
    let mut since_restart = 0u64;
    'epochs: for k in 1..=cfg.epochs {
        let mut viewers: Vec<Viewer> = (0..n)
            .map(|_| Viewer {
                acc: StatsAccumulator::new(&weights),
            })
            .collect();
        let mut truth = StatsAccumulator::new(&weights);
        for step in 1..=t_iters {
            let t = (k - 1) * t_iters + step;
            let sigma = adv.direction(t, cfg.candidate);
            let mut columns: Vec<Vec<Sign>> = vec![Vec::new(); n];
            for &i in &good {
                columns[i] = (0..m).map(|_| random_sign(&mut coin_rngs[i])).collect();
            }
            let view = GameView {
                t,
                k,
                params,
                weights: &weights,
                bad,
                sigma,
                columns: &columns,
            };
            let writes = adv.bad_writes(&view, &mut adv_rng);
            if writes.len() != bad.len() {
                return Err(GameError::BadColumns {
                    got: writes.len(),
                    want: bad.len(),
                });
            }
            for (b, w) in bad.iter().zip(writes) {
                if w.len() > m {
                    return Err(GameError::TooManyCells {
                        column: b.0,
                        len: w.len(),
                        m,
                    });
                }
                columns[b.index()] = w;
            }
            let view = GameView {
                t,
                k,
                params,
                weights: &weights,
                bad,
                sigma,
                columns: &columns,
            };
            let amb = adv.ambiguity(&view, &mut adv_rng);
            if amb.len() > f {
                return Err(GameError::TooAmbiguous {
                    t,
                    got: amb.len(),
                    f,
                });
            }
            let mut seen = ProcessSet::default();
            for a in &amb {
                if columns[a.column.index()].is_empty() || !seen.insert(a.column) {
                    return Err(GameError::BadAmbiguity {
                        t,
                        column: a.column.0,
                    });
                }
            }
            let true_x: Vec<f64> = columns.iter().map(|c| column_value(c, x_max)).collect();
            truth.push(&true_x);
            let s_good: f64 = good.iter().map(|&i| weights[i] * true_x[i]).sum();
            let s_bad: f64 = (0..n)
                .filter(|&i| is_bad(i))
                .map(|i| weights[i] * true_x[i])
                .sum();
            let mut pos = 0u32;
            for &p in &good {
                let viewer = ProcessId(p as u32);
                let mut xs = true_x.clone();
                for a in amb.iter().filter(|a| a.hidden_from.contains(viewer)) {
                    let col = &columns[a.column.index()];
                    xs[a.column.index()] = column_value(&col[..col.len() - 1], x_max);
                }
                let total: f64 = xs.iter().zip(&weights).map(|(x, w)| x * w).sum();
                if Sign::of(total) == Sign::Pos {
                    pos += 1;
                }
                viewers[p].acc.push(&xs);
            }
            let rec = IterationRecord {
                t,
                sigma: sigma.value(),
                s_good,
                s_bad,
                pos_coins: pos,
                good_viewers: good.len() as u32,
            };
            if out.first_agreement.is_none() && rec.against_sigma() {
                out.first_agreement = Some(t);
            }
            out.iterations.push(rec);
            if cfg.stop_on_agreement && out.first_agreement.is_some() {
                break 'epochs;
            }
        }
        // Epoch boundary: every good viewer updates weights from its own view.
        let mut local: Vec<Option<Vec<f64>>> = vec![None; n];
        for &p in &good {
            let stats = viewers[p].acc.finish(k, params);
            local[p] = Some(local_update(&weights, &stats, params).weights);
        }
        let stats = truth.finish(k, params);
        let truth_local = local_update(&weights, &stats, params).weights;
        let mut next = vec![0.0; n];
        let mut zero_view_violations = 0;
        let mut max_view_gap: f64 = 0.0;
        for i in 0..n {
            let views = good
                .iter()
                .map(|&p| local[p].as_ref().expect("good viewer")[i]);
            let (lo, hi) = views
                .clone()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                    (a.min(x), b.max(x))
                });
            if !good.is_empty() {
                max_view_gap = max_view_gap.max(hi - lo);
            }
            next[i] = if is_bad(i) {
                // A corrupted process claims whichever legal view keeps it heaviest.
                reconcile_one(hi.max(truth_local[i]), params.w_min())
            } else {
                let own = local[i].as_ref().expect("good viewer")[i];
                let w = reconcile_one(own, params.w_min());
                if lo <= 0.0 && w > 0.0 {
                    zero_view_violations += 1;
                }
                w
            };
        }
        zero_bad(&mut next);
        let good_loss: f64 = good.iter().map(|&i| 1.0 - next[i]).sum();
        let bad_loss: f64 = (0..n).filter(|&i| is_bad(i)).map(|i| 1.0 - next[i]).sum();
        let invariant_ok = good_loss <= bad_loss + params.weight_slack() + 1e-12;
        since_restart += 1;
        let restarted = since_restart >= params.k_max as u64;
        out.epochs.push(EpochRecord {
            k,
            weights: weights.clone(),
            next_weights: next.clone(),
            stats,
            good_loss,
            bad_loss,
            invariant_ok,
            zero_view_violations,
            max_view_gap,
            restarted,
        });
        weights = next;
        if restarted {
            since_restart = 0;
            weights = vec![1.0; n];
            zero_bad(&mut weights);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct AllGood;
    impl GameAdversary for AllGood {}

    #[test]
    fn all_good_epochs_keep_weights_and_respect_thresholds() {
        let params = ProtocolParams::desk(8, 1, 8, 64);
        let out = run_game(&GameConfig::new(params.clone(), 2), &mut AllGood, 5).unwrap();
        assert_eq!(out.iterations.len(), 128);
        for e in &out.epochs {
            assert!(e.invariant_ok);
            assert!((0..8).all(|i| e.stats.dev_within(i, &e.weights)));
            assert_eq!(e.zero_view_violations, 0);
            assert_eq!(e.max_view_gap, 0.0);
        }
        assert!(out.iterations.iter().all(IterationRecord::coins_agree));
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let params = ProtocolParams::desk(5, 1, 4, 16);
        let a = run_game(&GameConfig::new(params.clone(), 1), &mut AllGood, 3).unwrap();
        let b = run_game(&GameConfig::new(params.clone(), 1), &mut AllGood, 3).unwrap();
        let c = run_game(&GameConfig::new(params, 1), &mut AllGood, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.iterations, c.iterations);
    }

    struct Greedy;
    impl GameAdversary for Greedy {
        fn corrupt(&mut self, params: &ProtocolParams, _: &mut ChaCha20Rng) -> ProcessSet {
            let mut s = ProcessSet::default();
            for i in 0..=params.f {
                s.insert(ProcessId(i as u32));
            }
            s
        }
    }

    #[test]
    fn budget_is_enforced() {
        let params = ProtocolParams::desk(9, 2, 4, 4);
        assert_eq!(
            run_game(&GameConfig::new(params, 1), &mut Greedy, 0),
            Err(GameError::Budget { got: 3, f: 2 })
        );
    }

    #[test]
    fn restart_resets_weights() {
        let params = ProtocolParams::desk(5, 1, 4, 8).with_k_max(1);
        let out = run_game(&GameConfig::new(params, 3), &mut AllGood, 1).unwrap();
        assert!(out
            .epochs
            .iter()
            .all(|e| e.restarted && e.weights.iter().all(|w| *w == 1.0)));
    }
}
