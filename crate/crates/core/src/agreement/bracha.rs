//! Three-phase Bracha iteration and the validation of other processes' claims.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::Sign;
use crate::sim::ProcessId;

/// A broadcast value: a plain vote or a decision candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BVal {
    Plain(Sign),
    Dec(Sign),
}

impl BVal {
    pub fn sign(self) -> Sign {
        match self {
            BVal::Plain(s) | BVal::Dec(s) => s,
        }
    }
}

/// Round `r` of iteration `t` is `3(t - 1) + phase`; the value sent in a round is
/// the sender's state after consuming the previous round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrachaMsg {
    pub round: u64,
    pub value: BVal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Consumes plain votes; next value is the sign of their sum.
    Sum,
    /// Consumes plain votes; a strict majority turns into a decision candidate.
    Majority,
    /// Consumes candidates; adopt, decide, or flip the coin.
    Decide,
}

impl Phase {
    pub fn of_round(round: u64) -> Phase {
        match round % 3 {
            0 => Phase::Sum,
            1 => Phase::Majority,
            _ => Phase::Decide,
        }
    }
}

pub fn iteration_of_round(round: u64) -> u64 {
    round / 3 + 1
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrachaError {
    #[error("validated conflicting decision candidates in round {round}")]
    ConflictingDec { round: u64 },
    #[error("round {round} needs {needed} validated messages, got {got}")]
    TooFew {
        round: u64,
        needed: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrachaState {
    pub value: BVal,
    /// Round whose messages are consumed next.
    pub round: u64,
    /// Candidates counted in the last decide phase.
    pub x: usize,
    pub candidate: Option<Sign>,
    pub decided: Option<(Sign, u64)>,
}

/// What the caller does after a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundOutcome {
    /// Broadcast the new value for the next round.
    Send(BVal),
    /// The iteration ended; `needs_coin` says whether the next value is the coin.
    IterationEnd { needs_coin: bool },
}

impl BrachaState {
    pub fn new(input: Sign) -> Self {
        BrachaState {
            value: BVal::Plain(input),
            round: 0,
            x: 0,
            candidate: None,
            decided: None,
        }
    }

    pub fn iteration(&self) -> u64 {
        iteration_of_round(self.round)
    }

    pub fn phase(&self) -> Phase {
        Phase::of_round(self.round)
    }

    /// Consumes the first `n - f` validated values of the current round.
    pub fn bracha_round(
        &mut self,
        validated: &[BVal],
        n: usize,
        f: usize,
    ) -> Result<RoundOutcome, BrachaError> {
        let need = n - f;
        if validated.len() < need {
            return Err(BrachaError::TooFew {
                round: self.round,
                needed: need,
                got: validated.len(),
            });
        }
        let s = &validated[..need];
        let round = self.round;
        self.round += 1;
        match Phase::of_round(round) {
            Phase::Sum => {
                let sum: i64 = s.iter().map(|v| v.sign().value()).sum();
                self.value = BVal::Plain(Sign::of_int(sum));
                Ok(RoundOutcome::Send(self.value))
            }
            Phase::Majority => {
                let pos = s.iter().filter(|v| v.sign() == Sign::Pos).count();
                if 2 * pos > n {
                    self.value = BVal::Dec(Sign::Pos);
                } else if 2 * (need - pos) > n {
                    self.value = BVal::Dec(Sign::Neg);
                }
                Ok(RoundOutcome::Send(self.value))
            }
            Phase::Decide => {
                let dec_pos = s.iter().filter(|v| **v == BVal::Dec(Sign::Pos)).count();
                let dec_neg = s.iter().filter(|v| **v == BVal::Dec(Sign::Neg)).count();
                if dec_pos > 0 && dec_neg > 0 {
                    return Err(BrachaError::ConflictingDec { round });
                }
                let (x, v) = if dec_neg > 0 {
                    (dec_neg, Sign::Neg)
                } else {
                    (dec_pos, Sign::Pos)
                };
                self.x = x;
                if x == 0 {
                    self.candidate = None;
                    return Ok(RoundOutcome::IterationEnd { needs_coin: true });
                }
                self.candidate = Some(v);
                self.value = BVal::Plain(v);
                if x > f && self.decided.is_none() {
                    self.decided = Some((v, iteration_of_round(round)));
                }
                Ok(RoundOutcome::IterationEnd { needs_coin: false })
            }
        }
    }

    /// Sets the next iteration's value from the coin.
    pub fn set_coin(&mut self, coin: Sign) {
        self.value = BVal::Plain(coin);
    }
}

/// Result of checking a claim against the validated messages of the previous round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    /// Valid; the witnesses are a subset of previous-round senders justifying it.
    Valid(Vec<ProcessId>),
    /// Not justified yet; more validated messages may justify it.
    Pending,
    /// Never valid.
    Invalid,
}

/// Validates `claim` sent for `round`, given the sender's own value in the previous
/// round and the validated previous-round messages `pool` (in validation order).
pub fn validate_claim(
    round: u64,
    claim: BVal,
    sender_prev: Option<BVal>,
    pool: &[(ProcessId, BVal)],
    n: usize,
    f: usize,
) -> Validity {
    let need = n - f;
    if round == 0 {
        return match claim {
            BVal::Plain(_) => Validity::Valid(Vec::new()),
            BVal::Dec(_) => Validity::Invalid,
        };
    }
    let Some(prev) = sender_prev else {
        return Validity::Invalid;
    };
    let of = |pred: &dyn Fn(BVal) -> bool| -> Vec<ProcessId> {
        pool.iter()
            .filter(|(_, v)| pred(*v))
            .map(|(q, _)| *q)
            .collect()
    };
    let take = |mut a: Vec<ProcessId>, k: usize, b: Vec<ProcessId>, l: usize| -> Vec<ProcessId> {
        a.truncate(k);
        a.extend(b.into_iter().take(l));
        a.sort();
        a
    };
    if pool.len() < need {
        return match (Phase::of_round(round - 1), claim) {
            (Phase::Sum | Phase::Decide, BVal::Dec(_)) => Validity::Invalid,
            _ => Validity::Pending,
        };
    }
    match Phase::of_round(round - 1) {
        Phase::Sum => {
            let BVal::Plain(s) = claim else {
                return Validity::Invalid;
            };
            let pos = of(&|v| v.sign() == Sign::Pos);
            let neg = of(&|v| v.sign() == Sign::Neg);
            // Most-favourable subset of size n - f for the claimed sign.
            let (a, b) = match s {
                Sign::Pos => {
                    let a = pos.len().min(need);
                    (a, need - a)
                }
                Sign::Neg => {
                    let b = neg.len().min(need);
                    (need - b, b)
                }
            };
            let ok =
                a <= pos.len() && b <= neg.len() && if s == Sign::Pos { a >= b } else { b > a };
            if ok {
                Validity::Valid(take(pos, a, neg, b))
            } else {
                Validity::Pending
            }
        }
        Phase::Majority => {
            let pos = of(&|v| v.sign() == Sign::Pos);
            let neg = of(&|v| v.sign() == Sign::Neg);
            let half = n / 2;
            match claim {
                BVal::Dec(s) => {
                    let (same, other) = if s == Sign::Pos {
                        (pos, neg)
                    } else {
                        (neg, pos)
                    };
                    if same.len() > half {
                        let k = same.len().min(need);
                        Validity::Valid(take(same, k, other, need - k))
                    } else {
                        Validity::Pending
                    }
                }
                BVal::Plain(u) => {
                    if prev != BVal::Plain(u) {
                        return Validity::Invalid;
                    }
                    let (a, b) = (pos.len().min(half), neg.len().min(half));
                    if a + b >= need {
                        let a = a.min(need);
                        Validity::Valid(take(pos, a, neg, need - a))
                    } else {
                        Validity::Pending
                    }
                }
            }
        }
        Phase::Decide => {
            let BVal::Plain(u) = claim else {
                return Validity::Invalid;
            };
            let cands = of(&|v| v == BVal::Dec(u));
            let plain = of(&|v| matches!(v, BVal::Plain(_)));
            if !cands.is_empty() {
                let rest = need - 1;
                let others: Vec<ProcessId> = pool
                    .iter()
                    .filter(|(q, v)| *q != cands[0] && *v != BVal::Dec(u.flip()))
                    .map(|(q, _)| *q)
                    .collect();
                if others.len() >= rest {
                    return Validity::Valid(take(vec![cands[0]], 1, others, rest));
                }
            }
            if plain.len() >= need {
                // No candidate among the witnesses: the value came from the coin.
                return Validity::Valid(take(plain, need, Vec::new(), 0));
            }
            Validity::Pending
        }
    }
}
