//! Plain-text graph fixtures: `n <count>`, then `V i cap` and `E i j cap` lines
//! (`cap` may be `inf`). Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use super::graph::{CapacitatedGraph, Capacity};
use super::rising_tide::FractionalMatching;
use super::MatchingError;

fn bad(line: usize, msg: impl Into<String>) -> MatchingError {
    MatchingError::Fixture {
        line,
        msg: msg.into(),
    }
}

pub fn parse_graph(text: &str) -> Result<CapacitatedGraph<f64>, MatchingError> {
    let mut g: Option<CapacitatedGraph<f64>> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(line, format!("bad number {s:?}")))
        };
        let idx = |s: &str, n: usize| match s.parse::<usize>() {
            Ok(i) if i < n => Ok(i),
            _ => Err(bad(line, format!("bad vertex {s:?}"))),
        };
        match (toks[0], g.as_mut()) {
            ("n", None) if toks.len() == 2 => {
                let n = toks[1].parse().map_err(|_| bad(line, "bad vertex count"))?;
                g = Some(CapacitatedGraph::empty(n));
            }
            ("V", Some(g)) if toks.len() == 3 => {
                let i = idx(toks[1], g.n())?;
                g.set_vertex_cap(i, num(toks[2])?);
            }
            ("E", Some(g)) if toks.len() == 4 => {
                let (i, j) = (idx(toks[1], g.n())?, idx(toks[2], g.n())?);
                let cap = if toks[3] == "inf" {
                    Capacity::Infinite
                } else {
                    Capacity::Finite(num(toks[3])?)
                };
                g.set_edge_cap(i, j, cap);
            }
            _ => return Err(bad(line, format!("unexpected line {body:?}"))),
        }
    }
    let g = g.ok_or_else(|| bad(0, "missing header"))?;
    g.validate()?;
    Ok(g)
}

/// Writes every vertex and every edge with non-zero capacity.
pub fn write_graph(g: &CapacitatedGraph<f64>) -> String {
    let mut s = format!("n {}\n", g.n());
    for i in 0..g.n() {
        writeln!(s, "V {i} {}", g.vertex_cap(i)).unwrap();
    }
    for (i, j) in g.pairs() {
        match g.edge_cap(i, j) {
            Capacity::Infinite => writeln!(s, "E {i} {j} inf").unwrap(),
            Capacity::Finite(c) if *c != 0.0 => writeln!(s, "E {i} {j} {c}").unwrap(),
            Capacity::Finite(_) => {}
        }
    }
    s
}

/// Same layout as a graph: vertex lines give loads, edge lines give `mu`.
pub fn write_matching(mu: &FractionalMatching<f64>) -> String {
    let mut s = format!("n {}\n", mu.n());
    for i in 0..mu.n() {
        writeln!(s, "V {i} {}", mu.load(i)).unwrap();
    }
    for i in 0..mu.n() {
        for j in i..mu.n() {
            let x = *mu.get(i, j);
            if x != 0.0 {
                writeln!(s, "E {i} {j} {x}").unwrap();
            }
        }
    }
    s
}
