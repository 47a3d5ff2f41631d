//! Maximal fractional matching by raising all active edges in lockstep.

use serde::{Deserialize, Serialize};

use super::graph::{CapacitatedGraph, Capacity};
use super::scalar::Scalar;
use super::MatchingError;

/// What saturated at a freeze step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cause {
    Vertex(usize),
    Edge(usize, usize),
}

/// Edges frozen together at one level of the tide.
#[derive(Debug, Clone, PartialEq)]
pub struct FreezeStep<S> {
    pub level: S,
    pub frozen: Vec<(usize, usize)>,
    pub causes: Vec<Cause>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalMatching<S> {
    n: usize,
    mu: Vec<S>,
    pub trace: Vec<FreezeStep<S>>,
}

impl<S: Scalar> FractionalMatching<S> {
    pub fn zero(n: usize) -> Self {
        FractionalMatching {
            n,
            mu: vec![S::zero(); n * n],
            trace: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Matching with the given values on unordered pairs, zero elsewhere.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize, S)>) -> Self {
        let mut mu = Self::zero(n);
        for (i, j, v) in pairs {
            mu.set(i, j, v);
        }
        mu
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.mu[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: S) {
        self.mu[i * self.n + j] = v.clone();
        self.mu[j * self.n + i] = v;
    }

    /// `sum_j mu(i, j)`, the self-loop counted once.
    pub fn load(&self, i: usize) -> S {
        let row = &self.mu[i * self.n..(i + 1) * self.n];
        row.iter().fold(S::zero(), |acc, x| acc + x.clone())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> FractionalMatching<T> {
        FractionalMatching {
            n: self.n,
            mu: self.mu.iter().map(&f).collect(),
            trace: self
                .trace
                .iter()
                .map(|s| FreezeStep {
                    level: f(&s.level),
                    frozen: s.frozen.clone(),
                    causes: s.causes.clone(),
                })
                .collect(),
        }
    }
}

/// Arc `from -> to`: edge `edge` froze because `to` saturated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyArc {
    pub from: usize,
    pub to: usize,
    /// Index into the freeze trace.
    pub step: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub n: usize,
    pub arcs: Vec<DependencyArc>,
}

/// Runs the tide on `g`. Each loop iteration freezes every active edge touching a
/// saturated vertex or at its own capacity, then raises the remaining active edges
/// by the largest step that keeps the matching feasible.
pub fn rising_tide<S: Scalar>(
    g: &CapacitatedGraph<S>,
) -> Result<(FractionalMatching<S>, DependencyGraph), MatchingError> {
    g.validate()?;
    let n = g.n();
    let mut out = FractionalMatching::zero(n);
    let mut deps = DependencyGraph {
        n,
        arcs: Vec::new(),
    };
    let mut active: Vec<(usize, usize)> = g
        .pairs()
        .filter(|&(i, j)| g.edge_cap(i, j).is_positive())
        .collect();
    let mut level = S::zero();
    let mut load = vec![S::zero(); n];
    while !active.is_empty() {
        let vertex_full: Vec<bool> = (0..n)
            .map(|i| (g.vertex_cap(i).clone() - load[i].clone()).is_nonpositive())
            .collect();
        let mut step = FreezeStep {
            level: level.clone(),
            frozen: Vec::new(),
            causes: Vec::new(),
        };
        let step_index = out.trace.len();
        let mut saturated_vertices = vec![false; n];
        active.retain(|&(i, j)| {
            let edge_full = match g.edge_cap(i, j) {
                Capacity::Finite(c) => (c.clone() - level.clone()).is_nonpositive(),
                Capacity::Infinite => false,
            };
            if !(edge_full || vertex_full[i] || vertex_full[j]) {
                return true;
            }
            if edge_full {
                step.causes.push(Cause::Edge(i, j));
            }
            for (a, b) in [(i, j), (j, i)] {
                if vertex_full[a] {
                    saturated_vertices[a] = true;
                    if a != b {
                        deps.arcs.push(DependencyArc {
                            from: b,
                            to: a,
                            step: step_index,
                        });
                    }
                }
            }
            step.frozen.push((i, j));
            false
        });
        if !step.frozen.is_empty() {
            step.causes
                .extend((0..n).filter(|&v| saturated_vertices[v]).map(Cause::Vertex));
            out.trace.push(step);
        }
        if active.is_empty() {
            break;
        }
        let mut degree = vec![0usize; n];
        for &(i, j) in &active {
            degree[i] += 1;
            if i != j {
                degree[j] += 1;
            }
        }
        let mut best: Option<S> = None;
        let mut consider = |x: S| {
            if best.as_ref().is_none_or(|b| x < *b) {
                best = Some(x);
            }
        };
        for &(i, j) in &active {
            if let Capacity::Finite(c) = g.edge_cap(i, j) {
                consider(c.clone() - level.clone());
            }
        }
        for v in 0..n {
            if degree[v] > 0 {
                consider((g.vertex_cap(v).clone() - load[v].clone()) / S::from_usize(degree[v]));
            }
        }
        let delta = best.expect("an active edge bounds the step through its endpoints");
        level = level + delta.clone();
        for v in 0..n {
            if degree[v] > 0 {
                load[v] = load[v].clone() + delta.clone() * S::from_usize(degree[v]);
            }
        }
        for &(i, j) in &active {
            out.set(i, j, level.clone());
        }
    }
    Ok((out, deps))
}

/// First capacity constraint `mu` breaks, if any.
pub fn check_feasible<S: Scalar>(
    g: &CapacitatedGraph<S>,
    mu: &FractionalMatching<S>,
) -> Result<(), String> {
    for (i, j) in g.pairs() {
        let x = mu.get(i, j);
        if x.is_negative() {
            return Err(format!("negative mu({i}, {j})"));
        }
        if let Capacity::Finite(c) = g.edge_cap(i, j) {
            if !(x.clone() - c.clone()).is_nonpositive() {
                return Err(format!(
                    "mu({i}, {j}) = {:?} exceeds edge capacity {:?}",
                    x, c
                ));
            }
        }
    }
    for i in 0..g.n() {
        if !(mu.load(i) - g.vertex_cap(i).clone()).is_nonpositive() {
            return Err(format!(
                "vertex {i} load {:?} exceeds capacity {:?}",
                mu.load(i),
                g.vertex_cap(i)
            ));
        }
    }
    Ok(())
}

/// First edge that could still be raised, if any.
pub fn check_maximal<S: Scalar>(
    g: &CapacitatedGraph<S>,
    mu: &FractionalMatching<S>,
) -> Result<(), String> {
    let full: Vec<bool> = (0..g.n())
        .map(|i| (g.vertex_cap(i).clone() - mu.load(i)).is_nonpositive())
        .collect();
    for (i, j) in g.pairs() {
        let edge_room = match g.edge_cap(i, j) {
            Capacity::Finite(c) => !(c.clone() - mu.get(i, j).clone()).is_nonpositive(),
            Capacity::Infinite => true,
        };
        if edge_room && !full[i] && !full[j] {
            return Err(format!(
                "edge ({i}, {j}) has residual capacity and unsaturated endpoints"
            ));
        }
    }
    Ok(())
}

impl DependencyGraph {
    /// Whether every freeze step of `mu` saturated at most one vertex.
    pub fn tie_free<S>(mu: &FractionalMatching<S>) -> bool {
        mu.trace.iter().all(|s| {
            s.causes
                .iter()
                .filter(|c| matches!(c, Cause::Vertex(_)))
                .count()
                <= 1
        })
    }

    fn arc_value<'a, S: Scalar>(&self, a: &DependencyArc, mu: &'a FractionalMatching<S>) -> &'a S {
        mu.get(a.from, a.to)
    }

    /// All arcs into a vertex carry equal `mu`.
    pub fn check_equal_in_values<S: Scalar>(
        &self,
        mu: &FractionalMatching<S>,
    ) -> Result<(), String> {
        for v in 0..self.n {
            let mut into = self.arcs.iter().filter(|a| a.to == v);
            if let Some(first) = into.next() {
                let x = self.arc_value(first, mu);
                for a in into {
                    let y = self.arc_value(a, mu);
                    if !(x.clone() - y.clone()).abs().is_nonpositive() {
                        return Err(format!("arcs into {v} carry {:?} and {:?}", x, y));
                    }
                }
            }
        }
        Ok(())
    }

    /// `mu` never increases along consecutive arcs `a -> b -> c`.
    pub fn check_monotone_paths<S: Scalar>(
        &self,
        mu: &FractionalMatching<S>,
    ) -> Result<(), String> {
        for a in &self.arcs {
            for b in self.arcs.iter().filter(|b| b.from == a.to) {
                let (x, y) = (self.arc_value(a, mu), self.arc_value(b, mu));
                if !(y.clone() - x.clone()).is_nonpositive() {
                    return Err(format!(
                        "mu rises along {} -> {} -> {}: {:?} then {:?}",
                        a.from, a.to, b.to, x, y
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg = vec![0usize; self.n];
        let mut adj = vec![Vec::new(); self.n];
        for a in &self.arcs {
            indeg[a.to] += 1;
            adj[a.from].push(a.to);
        }
        let mut stack: Vec<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &w in &adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        seen == self.n
    }
}
