//! The unweighted coin game with a fixed bad set, and the correlation-based
//! detector that names a suspicious pair after the game.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::params::Sign;
use crate::sim::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleGameConfig {
    pub n: usize,
    pub f: usize,
    pub rounds: usize,
    /// Keep playing after the first round whose outcome misses the direction.
    pub play_through: bool,
}

impl SimpleGameConfig {
    /// `f = floor(n / (3 + eps))`.
    pub fn with_eps(n: usize, eps: f64, rounds: usize) -> Self {
        SimpleGameConfig {
            n,
            f: (n as f64 / (3.0 + eps)).floor() as usize,
            rounds,
            play_through: true,
        }
    }
}

/// What the bad players see and choose each round.
pub trait SimpleAdversary {
    /// Direction for round `t`, chosen before any good value of the round.
    fn direction(&mut self, t: usize, rng: &mut ChaCha20Rng) -> Sign;

    /// Values for the bad players (in the order of `bad`) after seeing the good sum.
    fn bad_values(
        &mut self,
        t: usize,
        sigma: Sign,
        good_sum: i64,
        bad: &[usize],
        rng: &mut ChaCha20Rng,
    ) -> Vec<Sign>;
}

fn coin(rng: &mut ChaCha20Rng) -> Sign {
    if rng.gen::<bool>() {
        Sign::Pos
    } else {
        Sign::Neg
    }
}

/// Bad players flip fair coins.
pub struct PassiveGame;

impl SimpleAdversary for PassiveGame {
    fn direction(&mut self, _: usize, _: &mut ChaCha20Rng) -> Sign {
        Sign::Pos
    }

    fn bad_values(
        &mut self,
        _: usize,
        _: Sign,
        _: i64,
        bad: &[usize],
        rng: &mut ChaCha20Rng,
    ) -> Vec<Sign> {
        bad.iter().map(|_| coin(rng)).collect()
    }
}

/// Random direction. When the good sum points the wrong way, just enough bad
/// players push toward the direction and the rest push against it; with
/// `all_push`, every bad player pushes. Otherwise bad players flip fair coins,
/// corrected only as far as needed to keep the outcome.
pub struct CounteractGame {
    pub all_push: bool,
}

impl SimpleAdversary for CounteractGame {
    fn direction(&mut self, _: usize, rng: &mut ChaCha20Rng) -> Sign {
        coin(rng)
    }

    fn bad_values(
        &mut self,
        _: usize,
        sigma: Sign,
        good_sum: i64,
        bad: &[usize],
        rng: &mut ChaCha20Rng,
    ) -> Vec<Sign> {
        // Smallest `sigma * bad_sum` that makes the total's sign equal `sigma` (sgn(0) = +1).
        let need = -sigma.value() * good_sum + i64::from(sigma == Sign::Neg);
        if need <= 0 {
            // Fair coins, with the fewest flips needed to keep the outcome.
            let mut vals: Vec<Sign> = bad.iter().map(|_| coin(rng)).collect();
            let mut push: i64 = vals.iter().map(|v| sigma.value() * v.value()).sum();
            for v in vals.iter_mut() {
                if push >= need {
                    break;
                }
                if *v != sigma {
                    *v = sigma;
                    push += 2;
                }
            }
            return vals;
        }
        let b = bad.len() as i64;
        // `pushers - (b - pushers) >= need`.
        let pushers = if self.all_push {
            b
        } else {
            ((need + b + 1) / 2).min(b)
        };
        (0..b)
            .map(|k| if k < pushers { sigma } else { sigma.flip() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleGameOutcome {
    /// `values[i][t]` in `{-1, +1}`.
    pub values: Vec<Vec<i8>>,
    pub directions: Vec<Sign>,
    pub bad: Vec<usize>,
    /// First round (1-based) whose outcome missed the direction.
    pub ended_at: Option<usize>,
    pub rounds_played: usize,
}

impl SimpleGameOutcome {
    pub fn survived(&self) -> bool {
        self.ended_at.is_none()
    }
}

/// Plays the game with a uniformly random bad set of size `f`.
pub fn run_simplified_game<A: SimpleAdversary>(
    cfg: &SimpleGameConfig,
    adv: &mut A,
    seed: u64,
) -> SimpleGameOutcome {
    let mut good_rng = stream_rng(seed, 1);
    let mut adv_rng = stream_rng(seed, 0);
    let mut bad: Vec<usize> = sample(&mut adv_rng, cfg.n, cfg.f).into_vec();
    bad.sort_unstable();
    let is_bad: Vec<bool> = (0..cfg.n).map(|i| bad.binary_search(&i).is_ok()).collect();
    let mut values = vec![Vec::with_capacity(cfg.rounds); cfg.n];
    let mut directions = Vec::with_capacity(cfg.rounds);
    let mut ended_at = None;
    let mut rounds_played = 0;
    for t in 1..=cfg.rounds {
        let sigma = adv.direction(t, &mut adv_rng);
        let mut good_sum = 0;
        for i in 0..cfg.n {
            if !is_bad[i] {
                let v = coin(&mut good_rng);
                good_sum += v.value();
                values[i].push(v.value() as i8);
            }
        }
        let bv = adv.bad_values(t, sigma, good_sum, &bad, &mut adv_rng);
        assert_eq!(bv.len(), bad.len());
        let bad_sum: i64 = bv.iter().map(|s| s.value()).sum();
        for (&i, v) in bad.iter().zip(&bv) {
            values[i].push(v.value() as i8);
        }
        directions.push(sigma);
        rounds_played = t;
        if ended_at.is_none() && Sign::of_int(good_sum + bad_sum) != sigma {
            ended_at = Some(t);
            if !cfg.play_through {
                break;
            }
        }
    }
    SimpleGameOutcome {
        values,
        directions,
        bad,
        ended_at,
        rounds_played,
    }
}

/// Pair `i < j` maximizing `<X_i, X_j>`, ties to the lexicographically smallest.
pub fn detect_pair(values: &[Vec<i8>]) -> Option<(usize, usize)> {
    let n = values.len();
    let mut best: Option<((usize, usize), i64)> = None;
    for i in 0..n {
        for j in i + 1..n {
            let ip: i64 = values[i]
                .iter()
                .zip(&values[j])
                .map(|(a, b)| (*a as i64) * (*b as i64))
                .sum();
            if best.is_none_or(|(_, b)| ip > b) {
                best = Some(((i, j), ip));
            }
        }
    }
    best.map(|(p, _)| p)
}
