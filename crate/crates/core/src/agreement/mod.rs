//! Byzantine agreement: validated Bracha iterations with a weighted
//! blackboard coin, epoch weights and the restart rule.

mod bracha;
mod epoch;
mod node;

use serde::{Deserialize, Serialize};

pub use bracha::{
    iteration_of_round, validate_claim, BVal, BrachaError, BrachaMsg, BrachaState, Phase,
    RoundOutcome, Validity,
};
pub use epoch::{EpochSchedule, EpochState, WeightBook};
pub use node::{CoinRecord, DecisionRecord, Node, NodeMsg, ValidationRecord};

use crate::params::Sign;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgreementViolation {
    /// Two good processes decided differently.
    Disagreement {
        a: u32,
        b: u32,
    },
    /// Unanimous good inputs but a different decision.
    Validity {
        process: u32,
    },
    /// Decisions more than one iteration apart.
    Lag {
        first: u64,
        last: u64,
    },
    NonTermination,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementVerdict {
    pub agreement_ok: bool,
    pub validity_ok: bool,
    pub lag_ok: bool,
    pub violations: Vec<AgreementViolation>,
}

impl AgreementVerdict {
    pub fn is_safe(&self) -> bool {
        self.agreement_ok && self.validity_ok && self.lag_ok
    }
}

/// Checks decisions of good processes. `inputs` are the good processes' inputs;
/// `expected` is how many good processes should have decided.
pub fn check_agreement(
    inputs: &[Sign],
    decisions: &[DecisionRecord],
    expected: usize,
) -> AgreementVerdict {
    let mut violations = Vec::new();
    if decisions.is_empty() {
        violations.push(AgreementViolation::NonTermination);
        return AgreementVerdict {
            agreement_ok: true,
            validity_ok: true,
            lag_ok: true,
            violations,
        };
    }
    let first = &decisions[0];
    let mut agreement_ok = true;
    for d in &decisions[1..] {
        if d.value != first.value {
            agreement_ok = false;
            violations.push(AgreementViolation::Disagreement {
                a: first.process,
                b: d.process,
            });
        }
    }
    let mut validity_ok = true;
    if let Some(&v) = inputs.first() {
        if inputs.iter().all(|&x| x == v) {
            for d in decisions.iter().filter(|d| d.value != v.value()) {
                validity_ok = false;
                violations.push(AgreementViolation::Validity { process: d.process });
            }
        }
    }
    let lo = decisions.iter().map(|d| d.iteration).min().unwrap_or(0);
    let hi = decisions.iter().map(|d| d.iteration).max().unwrap_or(0);
    let lag_ok = hi - lo <= 1;
    if !lag_ok {
        violations.push(AgreementViolation::Lag {
            first: lo,
            last: hi,
        });
    }
    if decisions.len() < expected {
        violations.push(AgreementViolation::NonTermination);
    }
    AgreementVerdict {
        agreement_ok,
        validity_ok,
        lag_ok,
        violations,
    }
}
