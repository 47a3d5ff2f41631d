//! Output stability of the tide under input perturbation.

use super::graph::{CapacitatedGraph, Capacity};
use super::rising_tide::rising_tide;
use super::scalar::Scalar;
use super::MatchingError;

/// Left and right side of the stability bound for a pair of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Defect<S> {
    /// `sum_i |residual_G(i) - residual_H(i)|`, residual = capacity minus load.
    pub lhs: S,
    pub eta_v: S,
    /// Edge-capacity distance, each unordered pair counted once; `None` if an edge
    /// is infinite in one graph only.
    pub eta_e: Option<S>,
}

impl<S: Scalar> Defect<S> {
    /// `eta_V + 2 eta_E`, or `None` when unbounded.
    pub fn bound(&self) -> Option<S> {
        self.eta_e
            .clone()
            .map(|e| self.eta_v.clone() + e.clone() + e)
    }

    pub fn holds(&self, tol: f64) -> bool {
        match self.bound() {
            Some(b) => (self.lhs.clone() - b - S::from_f64(tol)).is_nonpositive(),
            None => true,
        }
    }
}

pub fn lipschitz_defect<S: Scalar>(
    g: &CapacitatedGraph<S>,
    h: &CapacitatedGraph<S>,
) -> Result<Defect<S>, MatchingError> {
    if g.n() != h.n() {
        return Err(MatchingError::VertexSetMismatch {
            left: g.n(),
            right: h.n(),
        });
    }
    let (mg, _) = rising_tide(g)?;
    let (mh, _) = rising_tide(h)?;
    let mut lhs = S::zero();
    let mut eta_v = S::zero();
    for i in 0..g.n() {
        let rg = g.vertex_cap(i).clone() - mg.load(i);
        let rh = h.vertex_cap(i).clone() - mh.load(i);
        lhs = lhs + (rg - rh).abs();
        eta_v = eta_v + (g.vertex_cap(i).clone() - h.vertex_cap(i).clone()).abs();
    }
    let mut eta_e = Some(S::zero());
    for (i, j) in g.pairs() {
        eta_e = match (eta_e, g.edge_cap(i, j), h.edge_cap(i, j)) {
            (Some(acc), Capacity::Finite(a), Capacity::Finite(b)) => {
                Some(acc + (a.clone() - b.clone()).abs())
            }
            (Some(acc), Capacity::Infinite, Capacity::Infinite) => Some(acc),
            _ => None,
        };
    }
    Ok(Defect { lhs, eta_v, eta_e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> CapacitatedGraph<f64> {
        let mut g = CapacitatedGraph::empty(4);
        for (i, c) in [1.0, 0.5, 1.0, 0.7].into_iter().enumerate() {
            g.set_vertex_cap(i, c);
        }
        g.set_edge_cap(0, 1, Capacity::Infinite);
        g.set_edge_cap(1, 2, Capacity::Infinite);
        g
    }

    #[test]
    fn identical_graphs_have_zero_defect() {
        let d = lipschitz_defect(&path(), &path()).unwrap();
        assert_eq!((d.lhs, d.eta_v, d.eta_e), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn isolated_vertex_change_moves_output_by_the_same_amount() {
        let mut h = path();
        h.set_vertex_cap(3, 0.4);
        let d = lipschitz_defect(&path(), &h).unwrap();
        assert!((d.lhs - 0.3).abs() < 1e-12);
        assert!((d.eta_v - 0.3).abs() < 1e-12);
        assert!(d.holds(1e-9));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let err = lipschitz_defect(&path(), &CapacitatedGraph::empty(3)).unwrap_err();
        assert_eq!(err, MatchingError::VertexSetMismatch { left: 4, right: 3 });
    }
}
