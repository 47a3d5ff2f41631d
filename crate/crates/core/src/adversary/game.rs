//! Strategies for the abstracted-blackboard game.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use super::message::random_subset;
use crate::game::{column_value, random_sign, Ambiguity, GameAdversary, GameView};
use crate::params::{ProtocolParams, Sign};
use crate::sim::{ProcessId, ProcessSet};

fn corrupt_f(params: &ProtocolParams, rng: &mut ChaCha20Rng) -> ProcessSet {
    let mut s = ProcessSet::default();
    for p in random_subset(rng, params.n, params.f) {
        s.insert(p);
    }
    s
}

/// `count` cells summing to `sum` (same parity, `|sum| <= count`), alternating where balanced.
fn cells_with_sum(sum: i64, count: usize) -> Vec<Sign> {
    let k = sum.unsigned_abs() as usize;
    let lead = if sum >= 0 { Sign::Pos } else { Sign::Neg };
    let mut out = vec![lead; k];
    for j in 0..count - k {
        out.push(if j % 2 == 0 { Sign::Pos } else { Sign::Neg });
    }
    out
}

/// Bad columns pushing the weighted total towards `sigma`.
///
/// Bad players offset the good sum they observe: the weighted bad sum `S_B` is
/// chosen so that `sigma * (S_G + S_B)` has sign `sigma`, using the heaviest bad
/// columns first and as few cells as needed. When the good sum already has sign
/// `sigma` the bad columns sum to zero. When the offset exceeds what the bad
/// columns can carry they all saturate towards `sigma`.
pub fn counteract_bad_values(view: &GameView<'_>) -> Vec<Vec<Sign>> {
    let params = view.params;
    let m = params.m as i64;
    let cap = m.min(params.x_max().floor() as i64);
    let sigma = view.sigma;
    let s_good = view.weighted_sum(view.good());
    let bad: Vec<ProcessId> = view.bad.iter().collect();
    let mut sums = vec![0i64; bad.len()];
    // Weighted amount still to add in direction sigma; for sigma = -1 the total must be
    // strictly negative, for sigma = +1 non-negative.
    let mut need = -sigma.value() as f64 * s_good;
    let strict = sigma == Sign::Neg;
    let mut order: Vec<usize> = (0..bad.len()).collect();
    order.sort_by(|&a, &b| {
        view.weights[bad[b].index()]
            .total_cmp(&view.weights[bad[a].index()])
            .then(a.cmp(&b))
    });
    for &j in &order {
        if need < 0.0 || (need == 0.0 && !strict) {
            break;
        }
        let w = view.weights[bad[j].index()];
        if w <= 0.0 {
            continue;
        }
        let mut s = (need / w).ceil() as i64;
        if strict && (s as f64) * w <= need {
            s += 1;
        }
        let s = s.clamp(0, cap);
        sums[j] = s;
        need -= s as f64 * w;
    }
    sums.iter()
        .map(|&s| {
            let signed = s * sigma.value();
            let count = if (m - s) % 2 == 0 { m } else { m - 1 };
            cells_with_sum(signed, count as usize)
        })
        .collect()
}

/// How a strategy uses ambiguous cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbiguityPolicy {
    /// None.
    Off,
    /// Hide cells from every good viewer when that turns the coin towards `sigma`.
    Push,
    /// Hide cells from half the good viewers whenever that changes their coin.
    Split,
}

/// Last cells of the `f` heaviest columns whose removal moves the total towards `dir`.
fn removable(view: &GameView<'_>, dir: Sign) -> Vec<(ProcessId, f64)> {
    let x_max = view.params.x_max();
    let mut c: Vec<(ProcessId, f64)> = (0..view.params.n)
        .filter_map(|i| {
            let col = &view.columns[i];
            if col.is_empty() {
                return None;
            }
            let shift = view.weights[i]
                * (column_value(&col[..col.len() - 1], x_max) - column_value(col, x_max));
            (shift * dir.value() as f64 > 0.0).then_some((ProcessId(i as u32), shift))
        })
        .collect();
    c.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    c.truncate(view.params.f);
    c
}

pub fn ambiguity_for(
    policy: AmbiguityPolicy,
    view: &GameView<'_>,
    rng: &mut ChaCha20Rng,
) -> Vec<Ambiguity> {
    if policy == AmbiguityPolicy::Off {
        return Vec::new();
    }
    let total = view.weighted_sum(0..view.params.n);
    let current = Sign::of(total);
    let good: Vec<ProcessId> = view.good().map(|i| ProcessId(i as u32)).collect();
    let target = match policy {
        AmbiguityPolicy::Push if current != view.sigma => view.sigma,
        AmbiguityPolicy::Split => current.flip(),
        _ => return Vec::new(),
    };
    let cells = removable(view, target);
    let moved = total + cells.iter().map(|c| c.1).sum::<f64>();
    if Sign::of(moved) != target {
        return Vec::new();
    }
    let mut hidden = ProcessSet::default();
    match policy {
        AmbiguityPolicy::Push => good.iter().for_each(|&p| {
            hidden.insert(p);
        }),
        _ => {
            let mut g = good.clone();
            g.shuffle(rng);
            for &p in &g[..g.len() / 2] {
                hidden.insert(p);
            }
        }
    }
    cells
        .into_iter()
        .map(|(column, _)| Ambiguity {
            column,
            hidden_from: hidden,
        })
        .collect()
}

/// All good; no ambiguity.
#[derive(Debug, Default)]
pub struct GameHonest;

impl GameAdversary for GameHonest {}

/// `f` corrupted processes that never write.
#[derive(Debug, Default)]
pub struct GameCrash;

impl GameAdversary for GameCrash {
    fn corrupt(&mut self, params: &ProtocolParams, rng: &mut ChaCha20Rng) -> ProcessSet {
        corrupt_f(params, rng)
    }

    fn bad_writes(&mut self, view: &GameView<'_>, _: &mut ChaCha20Rng) -> Vec<Vec<Sign>> {
        view.bad.iter().map(|_| Vec::new()).collect()
    }
}

/// `f` corrupted processes offsetting the good sum towards `sigma`.
#[derive(Debug)]
pub struct GameCounteract {
    pub ambiguity: AmbiguityPolicy,
}

impl Default for GameCounteract {
    fn default() -> Self {
        GameCounteract {
            ambiguity: AmbiguityPolicy::Push,
        }
    }
}

impl GameAdversary for GameCounteract {
    fn corrupt(&mut self, params: &ProtocolParams, rng: &mut ChaCha20Rng) -> ProcessSet {
        corrupt_f(params, rng)
    }

    fn bad_writes(&mut self, view: &GameView<'_>, _: &mut ChaCha20Rng) -> Vec<Vec<Sign>> {
        counteract_bad_values(view)
    }

    fn ambiguity(&mut self, view: &GameView<'_>, rng: &mut ChaCha20Rng) -> Vec<Ambiguity> {
        ambiguity_for(self.ambiguity, view, rng)
    }
}

/// `f` corrupted processes all copying one leader's fair flips.
#[derive(Debug, Default)]
pub struct GameColluding;

impl GameAdversary for GameColluding {
    fn corrupt(&mut self, params: &ProtocolParams, rng: &mut ChaCha20Rng) -> ProcessSet {
        corrupt_f(params, rng)
    }

    fn bad_writes(&mut self, view: &GameView<'_>, rng: &mut ChaCha20Rng) -> Vec<Vec<Sign>> {
        let leader: Vec<Sign> = (0..view.params.m).map(|_| random_sign(rng)).collect();
        view.bad.iter().map(|_| leader.clone()).collect()
    }
}
