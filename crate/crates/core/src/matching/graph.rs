use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::MatchingError;

/// Edge capacity; `Infinite` never limits the step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Capacity<S> {
    Finite(S),
    Infinite,
}

impl<S: Scalar> Capacity<S> {
    pub fn zero() -> Self {
        Capacity::Finite(S::zero())
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Capacity::Finite(c) => !c.is_nonpositive(),
            Capacity::Infinite => true,
        }
    }

    pub fn map<T>(&self, f: impl Fn(&S) -> T) -> Capacity<T> {
        match self {
            Capacity::Finite(c) => Capacity::Finite(f(c)),
            Capacity::Infinite => Capacity::Infinite,
        }
    }
}

/// Undirected graph on `0..n` with vertex capacities and symmetric edge
/// capacities, self-loops included.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitatedGraph<S> {
    n: usize,
    c_v: Vec<S>,
    c_e: Vec<Capacity<S>>,
}

impl<S: Scalar> CapacitatedGraph<S> {
    /// All vertex and edge capacities zero.
    pub fn empty(n: usize) -> Self {
        CapacitatedGraph {
            n,
            c_v: vec![S::zero(); n],
            c_e: vec![Capacity::zero(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertex_cap(&self, i: usize) -> &S {
        &self.c_v[i]
    }

    pub fn vertex_caps(&self) -> &[S] {
        &self.c_v
    }

    pub fn edge_cap(&self, i: usize, j: usize) -> &Capacity<S> {
        &self.c_e[i * self.n + j]
    }

    pub fn set_vertex_cap(&mut self, i: usize, c: S) {
        self.c_v[i] = c;
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_edge_cap(&mut self, i: usize, j: usize, c: Capacity<S>) {
        self.c_e[i * self.n + j] = c.clone();
        self.c_e[j * self.n + i] = c;
    }

    /// Unordered pairs `i <= j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n;
        (0..n).flat_map(move |i| (i..n).map(move |j| (i, j)))
    }

    pub fn validate(&self) -> Result<(), MatchingError> {
        for (i, c) in self.c_v.iter().enumerate() {
            if c.is_negative() {
                return Err(MatchingError::NegativeCapacity {
                    what: format!("vertex {i}"),
                });
            }
        }
        for (i, j) in self.pairs() {
            if let Capacity::Finite(c) = self.edge_cap(i, j) {
                if c.is_negative() {
                    return Err(MatchingError::NegativeCapacity {
                        what: format!("edge ({i}, {j})"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Clamps every finite or infinite edge capacity to `min(c_V(i), c_V(j))`.
    pub fn clamp_edges_to_vertices(&mut self) {
        for (i, j) in self.pairs().collect::<Vec<_>>() {
            let lim = if self.c_v[i] < self.c_v[j] {
                self.c_v[i].clone()
            } else {
                self.c_v[j].clone()
            };
            let clamped = match self.edge_cap(i, j) {
                Capacity::Finite(c) if *c <= lim => continue,
                _ => Capacity::Finite(lim),
            };
            self.set_edge_cap(i, j, clamped);
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> CapacitatedGraph<T> {
        CapacitatedGraph {
            n: self.n,
            c_v: self.c_v.iter().map(&f).collect(),
            c_e: self.c_e.iter().map(|c| c.map(&f)).collect(),
        }
    }
}
