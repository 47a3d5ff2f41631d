//! Post-hoc invariant checks over run records.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::record::{BoardRecord, RunRecord};
use crate::agreement::{check_agreement, AgreementViolation, BVal};
use crate::matching::{check_feasible, check_maximal};
use crate::params::Sign;

/// Checks that report progress rather than safety.
pub const LIVENESS: &[&str] = &["bracha-termination"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantVerdict {
    pub name: String,
    pub passed: bool,
    /// Event ordinal (or epoch, for weight checks) of the first violation, when known.
    pub first_violation: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictBundle {
    pub checks: Vec<InvariantVerdict>,
}

impl VerdictBundle {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Every check except liveness ones.
    pub fn safety_ok(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| !LIVENESS.contains(&c.name.as_str()))
            .all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantVerdict> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &InvariantVerdict> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Check {
    name: &'static str,
    first: Option<u64>,
    detail: String,
    failed: bool,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            first: None,
            detail: String::new(),
            failed: false,
        }
    }

    fn fail(&mut self, at: Option<u64>, detail: impl FnOnce() -> String) {
        if !self.failed {
            self.detail = detail();
        }
        self.failed = true;
        self.first = match (self.first, at) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }

    fn done(self) -> InvariantVerdict {
        InvariantVerdict {
            name: self.name.into(),
            passed: !self.failed,
            first_violation: self.first,
            detail: self.detail,
        }
    }
}

/// Runs every registered invariant over `rec`.
pub fn verify_record(rec: &RunRecord) -> VerdictBundle {
    let mut checks = Vec::new();
    checks.extend(broadcast_checks(rec));
    checks.extend(board_checks(rec));
    checks.push(weight_check(rec));
    checks.extend(matching_checks(rec));
    checks.extend(bracha_checks(rec));
    VerdictBundle { checks }
}

fn broadcast_checks(rec: &RunRecord) -> Vec<InvariantVerdict> {
    let mut agree = Check::new("broadcast-agreement");
    let mut fifo = Check::new("broadcast-fifo");
    let mut total = Check::new("broadcast-totality");
    let mut first: BTreeMap<(u32, u64), (u64, u32)> = BTreeMap::new();
    for pa in &rec.accepts {
        let mut next: HashMap<u32, u64> = HashMap::new();
        for a in &pa.records {
            let want = next.entry(a.origin.0).or_insert(1);
            if a.seq != *want {
                fifo.fail(Some(a.ordinal), || {
                    format!(
                        "process {} accepted ({}, {}) expecting seq {}",
                        pa.process, a.origin, a.seq, want
                    )
                });
            }
            *want = a.seq + 1;
            match first.get(&(a.origin.0, a.seq)) {
                Some(&(d, who)) if d != a.digest => agree.fail(Some(a.ordinal), || {
                    format!(
                        "({}, {}) accepted as {d:016x} by {who} and {:016x} by {}",
                        a.origin, a.seq, a.digest, pa.process
                    )
                }),
                Some(_) => {}
                None => {
                    first.insert((a.origin.0, a.seq), (a.digest, pa.process));
                }
            }
        }
    }
    if rec.quiescent {
        for pa in &rec.accepts {
            let mine: std::collections::HashSet<(u32, u64)> =
                pa.records.iter().map(|a| (a.origin.0, a.seq)).collect();
            for key in first.keys() {
                if !mine.contains(key) {
                    total.fail(None, || {
                        format!(
                            "process {} never accepted ({}, {})",
                            pa.process, key.0, key.1
                        )
                    });
                }
            }
        }
    } else {
        total.detail = "not quiescent; skipped".into();
    }
    vec![agree.done(), fifo.done(), total.done()]
}

type CellMap = HashMap<(u64, u32, u32), i64>;

fn cell_map(b: &BoardRecord) -> CellMap {
    b.cells
        .iter()
        .filter_map(|c| c.value.map(|v| ((c.t, c.r, c.i), v)))
        .collect()
}

/// View of boards `1..=t` under `bar`: `(t, r, i) -> value` for visible coins.
fn view(cells: &CellMap, bar: &[Option<(u64, u32)>], t: u64) -> BTreeMap<(u64, u32, u32), i64> {
    cells
        .iter()
        .filter(|((tt, r, i), _)| {
            *tt <= t && *r >= 1 && bar[*i as usize].is_some_and(|b| (*tt, *r) <= b)
        })
        .map(|(k, v)| (*k, *v))
        .collect()
}

fn board_checks(rec: &RunRecord) -> Vec<InvariantVerdict> {
    let mut pair = Check::new("blackboard-view-agreement");
    let mut full = Check::new("blackboard-full-columns");
    let maps: Vec<CellMap> = rec.boards.iter().map(cell_map).collect();
    let need = rec.n - rec.f;
    for (b, cells) in rec.boards.iter().zip(&maps) {
        for fb in &b.finalized {
            let v = view(cells, &fb.lastbar, fb.t);
            let cols = (0..rec.n as u32)
                .filter(|i| v.contains_key(&(fb.t, rec.m as u32, *i)))
                .count();
            if cols < need {
                full.fail(Some(fb.ordinal), || {
                    format!(
                        "process {} board {}: {cols} full columns, need {need}",
                        b.process, fb.t
                    )
                });
            }
        }
    }
    for a in 0..rec.boards.len() {
        for b in a + 1..rec.boards.len() {
            let (ra, rb) = (&rec.boards[a], &rec.boards[b]);
            for fa in &ra.finalized {
                let Some(fbb) = rb.finalized.iter().find(|x| x.t == fa.t) else {
                    continue;
                };
                let va = view(&maps[a], &fa.lastbar, fa.t);
                let vb = view(&maps[b], &fbb.lastbar, fa.t);
                let mut diff = 0;
                let mut two_sided = false;
                for (k, x) in &va {
                    match vb.get(k) {
                        None => diff += 1,
                        Some(y) if y != x => {
                            diff += 1;
                            two_sided = true;
                        }
                        _ => {}
                    }
                }
                diff += vb.keys().filter(|k| !va.contains_key(k)).count();
                if diff > rec.f || two_sided {
                    pair.fail(Some(fa.ordinal.max(fbb.ordinal)), || {
                        format!(
                            "processes {} and {} disagree on {diff} cells through board {} (two-sided: {two_sided})",
                            ra.process, rb.process, fa.t
                        )
                    });
                }
            }
        }
    }
    vec![pair.done(), full.done()]
}

fn weight_check(rec: &RunRecord) -> InvariantVerdict {
    let mut c = Check::new("weight-loss-invariant");
    for e in &rec.epochs {
        if e.weights.iter().any(Option::is_none) {
            continue;
        }
        let w: Vec<f64> = e.weights.iter().map(|w| w.unwrap_or(0.0)).collect();
        let is_bad = |i: usize| rec.bad.contains(&(i as u32));
        let good: f64 = (0..rec.n).filter(|&i| !is_bad(i)).map(|i| 1.0 - w[i]).sum();
        let bad: f64 = (0..rec.n).filter(|&i| is_bad(i)).map(|i| 1.0 - w[i]).sum();
        if good > bad + rec.weight_slack + 1e-12 {
            c.fail(Some(e.k), || {
                format!(
                    "epoch {}: good loss {good} exceeds bad loss {bad} + {}",
                    e.k, rec.weight_slack
                )
            });
        }
    }
    c.done()
}

fn matching_checks(rec: &RunRecord) -> Vec<InvariantVerdict> {
    let mut feas = Check::new("matching-feasible");
    let mut max = Check::new("matching-maximal");
    for m in &rec.matchings {
        let (g, mu) = (m.graph(), m.matching());
        if let Err(e) = check_feasible(&g, &mu) {
            feas.fail(Some(m.k), || {
                format!("process {} epoch {}: {e}", m.process, m.k)
            });
        }
        if let Err(e) = check_maximal(&g, &mu) {
            max.fail(Some(m.k), || {
                format!("process {} epoch {}: {e}", m.process, m.k)
            });
        }
    }
    vec![feas.done(), max.done()]
}

fn bracha_checks(rec: &RunRecord) -> Vec<InvariantVerdict> {
    let mut agree = Check::new("bracha-agreement");
    let mut valid = Check::new("bracha-validity");
    let mut lag = Check::new("bracha-lag");
    let mut sound = Check::new("bracha-soundness");
    let mut term = Check::new("bracha-termination");
    let inputs: Vec<Sign> = rec
        .inputs
        .iter()
        .filter_map(|v| Sign::from_value(*v))
        .collect();
    let ds: Vec<_> = rec.decisions.clone();
    let at = |p: u32| ds.iter().find(|d| d.process == p).map(|d| d.event_ordinal);
    if !rec.expected_deciders.is_empty() || !ds.is_empty() {
        let v = check_agreement(&inputs, &ds, rec.expected_deciders.len());
        for viol in &v.violations {
            match viol {
                AgreementViolation::Disagreement { a, b } => agree.fail(at(*b), || {
                    format!("processes {a} and {b} decided differently")
                }),
                AgreementViolation::Validity { process } => valid.fail(at(*process), || {
                    format!("process {process} decided against unanimous input")
                }),
                AgreementViolation::Lag { first, last } => lag.fail(None, || {
                    format!("decisions in iterations {first} and {last}")
                }),
                AgreementViolation::NonTermination => term.fail(None, || {
                    format!(
                        "{} of {} expected deciders decided",
                        ds.len(),
                        rec.expected_deciders.len()
                    )
                }),
            }
        }
    }
    let mut dec: BTreeMap<u64, Sign> = BTreeMap::new();
    for c in &rec.candidates {
        if let BVal::Dec(v) = c.value {
            match dec.get(&c.round) {
                Some(&w) if w != v => sound.fail(None, || {
                    format!("conflicting decision candidates in round {}", c.round)
                }),
                Some(_) => {}
                None => {
                    dec.insert(c.round, v);
                }
            }
        }
    }
    vec![
        agree.done(),
        valid.done(),
        lag.done(),
        sound.done(),
        term.done(),
    ]
}
