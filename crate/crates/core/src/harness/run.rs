//! Seeded execution of experiments.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InputSpec, RunMode, StopSpec};
use super::record::{
    BoardRecord, EpochWeights, FinalizedBoard, MatchingCheckpoint, ProcessAccepts, RunRecord,
};
use super::verify::verify_record;
use super::HarnessError;
use crate::adversary::{game_strategy, message_strategy};
use crate::agreement::{BVal, Node};
use crate::broadcast::RbProcess;
use crate::game::{run_game, GameConfig, GameOutcome};
use crate::matching::{build_excess_graph, rising_tide};
use crate::params::{ProtocolParams, Sign};
use crate::sim::{stream_rng, ProcessId, ProcessSet, StopCondition, StopReason, TraceMode, World};
use crate::stats::EpochStats;

/// Stream for drawing random inputs; process streams use `1..=n`.
const INPUT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub mode: RunMode,
    pub adversary: String,
    pub stop_reason: String,
    pub events: u64,
    pub decided: bool,
    pub decision: Option<i64>,
    pub iterations_to_decide: Option<u64>,
    pub epochs_used: u64,
    /// Longest chain of causally dependent messages.
    pub chain_depth: u64,
    pub trace_digest: String,
    /// Consensus weights per epoch; `None` where unknown.
    pub epoch_weights: Vec<Vec<Option<f64>>>,
    pub s_good: Vec<f64>,
    pub s_bad: Vec<f64>,
    /// Per epoch, the largest `dev(i) / (w_i^2 alpha_T)` over good `i` with positive weight.
    pub dev_ratio: Vec<f64>,
    /// Per epoch, the largest `corr(i, j) / (w_i w_j beta_T)` over good pairs.
    pub corr_ratio: Vec<f64>,
    pub verdicts: BTreeMap<String, bool>,
    pub safety_ok: bool,
}

fn inputs(spec: InputSpec, n: usize, seed: u64) -> Vec<Sign> {
    match spec {
        InputSpec::Unanimous(s) => vec![s; n],
        InputSpec::Split => (0..n)
            .map(|i| if i % 2 == 0 { Sign::Pos } else { Sign::Neg })
            .collect(),
        InputSpec::Random => {
            let mut rng = stream_rng(seed, INPUT_STREAM);
            (0..n)
                .map(|_| {
                    if rng.gen::<bool>() {
                        Sign::Pos
                    } else {
                        Sign::Neg
                    }
                })
                .collect()
        }
    }
}

/// Largest threshold ratios among good processes.
fn ratios(stats: &EpochStats, w: &[f64], good: &[usize]) -> (f64, f64) {
    let mut dev: f64 = 0.0;
    let mut corr: f64 = f64::NEG_INFINITY;
    for &i in good {
        if w[i] > 0.0 {
            dev = dev.max(stats.dev[i] / (w[i] * w[i] * stats.alpha_t));
        }
        for &j in good.iter().filter(|&&j| j > i) {
            if w[i] > 0.0 && w[j] > 0.0 {
                corr = corr.max(stats.corr(i, j) / (w[i] * w[j] * stats.beta_t));
            }
        }
    }
    (dev, if corr.is_finite() { corr } else { 0.0 })
}

/// One message-level run.
pub fn run_message(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(RunMetrics, RunRecord), HarnessError> {
    let params = &cfg.params;
    let (n, f) = (params.n, params.f);
    let ins = inputs(cfg.inputs, n, seed);
    let strat = message_strategy(&cfg.adversary, &cfg.adversary_args, params, seed)?;
    let procs = (0..n as u32)
        .map(|i| {
            RbProcess::new(
                ProcessId(i),
                n,
                f,
                Node::new(ProcessId(i), ins[i as usize], params),
            )
        })
        .collect();
    let mut world = World::new(params.clone(), procs, seed, TraceMode::DigestOnly);
    let mut target = ProcessSet::default();
    for i in 0..n as u32 {
        if !strat.starved.contains(ProcessId(i)) {
            target.insert(ProcessId(i));
        }
    }
    let stop = match cfg.stop {
        StopSpec::Decided => StopCondition::AllDecidedAmong(target),
        StopSpec::Events(k) => StopCondition::MaxEvents(k),
        StopSpec::Epochs(k) => StopCondition::EpochLimit(k),
    };
    let mut adv = strat.adversary;
    let outcome = world.run(adv.as_mut(), stop, cfg.max_events)?;
    let bad = world.corrupted_set();
    let chain_depth = world.chain_depth();
    let trace_digest = format!("{:016x}", world.trace().digest());
    let events = world.trace().len();
    let mut procs = world.into_processes();
    let good: Vec<usize> = (0..n)
        .filter(|&i| !bad.contains(ProcessId(i as u32)))
        .collect();

    let mut rec = RunRecord::empty(seed, n, f, params.m, params.weight_slack());
    rec.bad = bad.iter().map(|p| p.0).collect();
    rec.expected_deciders = good
        .iter()
        .map(|&i| i as u32)
        .filter(|&i| target.contains(ProcessId(i)))
        .collect();
    rec.inputs = good.iter().map(|&i| ins[i].value()).collect();
    rec.quiescent = outcome.reason == StopReason::Quiescent;
    for &i in &good {
        let p = &procs[i];
        rec.accepts.push(ProcessAccepts {
            process: i as u32,
            records: p.rb.accept_log().to_vec(),
        });
        if let Some(d) = p.app.decision {
            rec.decisions.push(d);
        }
        rec.candidates.extend(
            p.app
                .validations
                .iter()
                .filter(|v| matches!(v.value, BVal::Dec(_)))
                .cloned(),
        );
        rec.boards.push(BoardRecord {
            process: i as u32,
            finalized: p
                .app
                .bb
                .finalized()
                .map(|(t, bar, ordinal)| FinalizedBoard {
                    t,
                    lastbar: bar.clone(),
                    ordinal,
                })
                .collect(),
            cells: p.app.bb.cell_dump(),
        });
    }
    let mut s_good = Vec::new();
    let mut s_bad = Vec::new();
    let mut dev_ratio = Vec::new();
    let mut corr_ratio = Vec::new();
    if let Some(&first) = good.first() {
        // Epoch accounting from the first good process's perspective.
        let node = &mut procs[first].app;
        let sched = node.weights.schedule();
        let last_board = node.bb.finalized().map(|(t, _, _)| t).max().unwrap_or(0);
        let epochs = if last_board == 0 {
            0
        } else {
            sched.epoch_of(last_board)
        };
        for k in 1..=epochs {
            let w = node.weights.consensus_vector(&node.bb, params, k);
            rec.epochs.push(EpochWeights { k, weights: w });
        }
        for t in 1..=last_board {
            let bar = node.bb.lastbar(t).expect("finalized").clone();
            let xs = node.bb.column_sums(&bar, t, params.x_max());
            let k = sched.epoch_of(t);
            let w: Vec<f64> = rec.epochs[(k - 1) as usize]
                .weights
                .iter()
                .map(|w| w.unwrap_or(0.0))
                .collect();
            let part = |i: usize| w[i] * xs[i];
            s_good.push(good.iter().map(|&i| part(i)).sum());
            s_bad.push(bad.iter().map(|p| part(p.index())).sum());
        }
        for &i in &good {
            let node = &mut procs[i].app;
            let last_board = node.bb.finalized().map(|(t, _, _)| t).max().unwrap_or(0);
            let done_epochs = last_board / sched.t_iters;
            for k in 1..=done_epochs {
                let w: Vec<f64> = node
                    .weights
                    .consensus_vector(&node.bb, params, k)
                    .into_iter()
                    .map(|w| w.unwrap_or(0.0))
                    .collect();
                let Some((stats, _)) = node.weights.own_update(&node.bb, params, k).cloned() else {
                    continue;
                };
                let g = build_excess_graph(&w, &stats, params);
                let (mu, _) = rising_tide(&g).expect("non-negative capacities");
                rec.matchings
                    .push(MatchingCheckpoint::new(k, i as u32, &g, &mu));
                if i == first {
                    let (d, c) = ratios(&stats, &w, &good);
                    dev_ratio.push(d);
                    corr_ratio.push(c);
                }
            }
        }
    }
    let verdict = verify_record(&rec);
    let decision = rec.decisions.first().map(|d| d.value);
    let iterations_to_decide = rec.decisions.iter().map(|d| d.iteration).max();
    let decided =
        !rec.expected_deciders.is_empty() && rec.decisions.len() == rec.expected_deciders.len();
    let metrics = RunMetrics {
        seed,
        mode: RunMode::Message,
        adversary: cfg.adversary.clone(),
        stop_reason: format!("{:?}", outcome.reason),
        events,
        decided,
        decision,
        iterations_to_decide,
        epochs_used: rec.epochs.len() as u64,
        chain_depth,
        trace_digest,
        epoch_weights: rec.epochs.iter().map(|e| e.weights.clone()).collect(),
        s_good,
        s_bad,
        dev_ratio,
        corr_ratio,
        verdicts: verdict
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.passed))
            .collect(),
        safety_ok: verdict.safety_ok(),
    };
    Ok((metrics, rec))
}

pub fn game_config(cfg: &ExperimentConfig) -> GameConfig {
    let epochs = match cfg.stop {
        StopSpec::Epochs(k) => k,
        _ => cfg.epochs,
    };
    GameConfig {
        params: cfg.params.clone(),
        epochs,
        candidate: cfg.candidate,
        force_bad_weights_zero: cfg.force_bad_weights_zero,
        stop_on_agreement: cfg.stop == StopSpec::Decided,
    }
}

/// Record of a game run: bad set and the consensus weights of every epoch.
pub fn game_record(params: &ProtocolParams, out: &GameOutcome, seed: u64) -> RunRecord {
    let mut rec = RunRecord::empty(seed, params.n, params.f, params.m, params.weight_slack());
    rec.bad = out.bad.clone();
    for e in &out.epochs {
        rec.epochs.push(EpochWeights {
            k: e.k + 1,
            weights: e.next_weights.iter().map(|w| Some(*w)).collect(),
        });
    }
    rec
}

/// One game-level run.
pub fn run_game_seed(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(RunMetrics, RunRecord, GameOutcome), HarnessError> {
    let mut adv = game_strategy(&cfg.adversary, &cfg.adversary_args)?;
    let gcfg = game_config(cfg);
    let out = run_game(&gcfg, adv.as_mut(), seed)?;
    let rec = game_record(&cfg.params, &out, seed);
    let verdict = verify_record(&rec);
    let good: Vec<usize> = (0..cfg.params.n)
        .filter(|i| !out.bad.contains(&(*i as u32)))
        .collect();
    let (dev_ratio, corr_ratio) = out
        .epochs
        .iter()
        .map(|e| ratios(&e.stats, &e.weights, &good))
        .unzip();
    let mut epoch_weights: Vec<Vec<Option<f64>>> = out
        .epochs
        .iter()
        .map(|e| e.weights.iter().map(|w| Some(*w)).collect())
        .collect();
    if let Some(last) = out.epochs.last() {
        epoch_weights.push(last.next_weights.iter().map(|w| Some(*w)).collect());
    }
    let metrics = RunMetrics {
        seed,
        mode: RunMode::Game,
        adversary: cfg.adversary.clone(),
        stop_reason: if gcfg.stop_on_agreement && out.first_agreement.is_some() {
            "Agreement".into()
        } else {
            "EpochLimit".into()
        },
        events: out.iterations.len() as u64,
        decided: out.first_agreement.is_some(),
        decision: None,
        iterations_to_decide: out.first_agreement,
        epochs_used: (out.epochs.len() as u64)
            .max((out.iterations.len() as u64).div_ceil(cfg.params.t_iters as u64)),
        chain_depth: 0,
        trace_digest: String::new(),
        epoch_weights,
        s_good: out.iterations.iter().map(|r| r.s_good).collect(),
        s_bad: out.iterations.iter().map(|r| r.s_bad).collect(),
        dev_ratio,
        corr_ratio,
        verdicts: verdict
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.passed))
            .collect(),
        safety_ok: verdict.safety_ok() && out.epochs.iter().all(|e| e.zero_view_violations == 0),
    };
    Ok((metrics, rec, out))
}

/// Worker count: `BF_THREADS` if set, else all cores.
pub fn worker_threads() -> usize {
    std::env::var("BF_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub metrics: RunMetrics,
    pub record: RunRecord,
    pub game: Option<GameOutcome>,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    Ok(match cfg.mode {
        RunMode::Message => {
            let (metrics, record) = run_message(cfg, seed)?;
            SeedRun {
                metrics,
                record,
                game: None,
            }
        }
        RunMode::Game => {
            let (metrics, record, out) = run_game_seed(cfg, seed)?;
            SeedRun {
                metrics,
                record,
                game: Some(out),
            }
        }
    })
}

/// Runs every seed, in parallel, returning metrics in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunMetrics>, HarnessError> {
    Ok(run_experiment_full(cfg)?
        .into_iter()
        .map(|r| r.metrics)
        .collect())
}

/// Like [`run_experiment`], keeping the records.
pub fn run_experiment_full(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    pool.install(|| seeds.par_iter().map(|&s| run_seed(cfg, s)).collect())
}
