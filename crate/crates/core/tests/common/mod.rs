//! Random graph generators and a fine-step reference for the tide.

#![allow(dead_code)]

use rand::Rng;
use tidewater_core::matching::{CapacitatedGraph, Capacity};

/// Random graph on `1..=max_n` vertices with some zero and infinite capacities
/// and self-loops.
pub fn random_graph<R: Rng>(rng: &mut R, max_n: usize) -> CapacitatedGraph<f64> {
    let n = rng.gen_range(1..=max_n);
    let mut g = CapacitatedGraph::empty(n);
    for i in 0..n {
        let c = if rng.gen_bool(0.1) {
            0.0
        } else {
            rng.gen_range(0.0..1.0)
        };
        g.set_vertex_cap(i, c);
    }
    for i in 0..n {
        for j in i..n {
            let p = if i == j { 0.3 } else { 0.6 };
            if !rng.gen_bool(p) {
                continue;
            }
            let c = if rng.gen_bool(0.15) {
                Capacity::Infinite
            } else {
                Capacity::Finite(rng.gen_range(0.0..1.2))
            };
            g.set_edge_cap(i, j, c);
        }
    }
    g
}

/// `g` with every finite capacity moved by at most `delta`, staying non-negative.
pub fn perturb<R: Rng>(
    rng: &mut R,
    g: &CapacitatedGraph<f64>,
    delta: f64,
) -> CapacitatedGraph<f64> {
    let mut h = g.clone();
    for i in 0..g.n() {
        let c = (g.vertex_cap(i) + rng.gen_range(-delta..=delta)).max(0.0);
        h.set_vertex_cap(i, c);
    }
    for (i, j) in g.pairs() {
        if let Capacity::Finite(c) = g.edge_cap(i, j) {
            let c = (c + rng.gen_range(-delta..=delta)).max(0.0);
            h.set_edge_cap(i, j, Capacity::Finite(c));
        }
    }
    h
}

/// Continuous tide by explicit time steps of size `dt`: all live edges rise at
/// unit rate; an edge stops when it hits its capacity or an endpoint is full.
/// Returns `mu` as a row-major `n x n` matrix.
pub fn euler_tide(g: &CapacitatedGraph<f64>, dt: f64) -> Vec<f64> {
    let n = g.n();
    let mut mu = vec![0.0; n * n];
    let mut live: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i..n {
            let open = match g.edge_cap(i, j) {
                Capacity::Finite(c) => *c > 0.0,
                Capacity::Infinite => true,
            };
            if open {
                live.push((i, j));
            }
        }
    }
    let load = |mu: &[f64], i: usize| -> f64 { mu[i * n..(i + 1) * n].iter().sum() };
    while !live.is_empty() {
        let full: Vec<bool> = (0..n).map(|i| load(&mu, i) >= *g.vertex_cap(i)).collect();
        live.retain(|&(i, j)| {
            let at_cap = matches!(g.edge_cap(i, j), Capacity::Finite(c) if mu[i * n + j] >= *c);
            !(at_cap || full[i] || full[j])
        });
        for &(i, j) in &live {
            let mut x = mu[i * n + j] + dt;
            if let Capacity::Finite(c) = g.edge_cap(i, j) {
                x = x.min(*c);
            }
            mu[i * n + j] = x;
            mu[j * n + i] = x;
        }
    }
    mu
}
