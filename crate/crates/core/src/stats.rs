//! Per-epoch deviation and correlation statistics over clamped coin sums.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::params::{ProtocolParams, Sign};

/// Maps `raw` to the nearest point of `[-x_max, x_max]`.
pub fn clamp_sum(raw: i64, x_max: f64) -> f64 {
    (raw as f64).clamp(-x_max, x_max)
}

/// Sum of the non-empty cells of a column, clamped to `[-x_max, x_max]`.
pub fn column_sum<I: IntoIterator<Item = Option<Sign>>>(cells: I, x_max: f64) -> f64 {
    let raw: i64 = cells.into_iter().flatten().map(Sign::value).sum();
    clamp_sum(raw, x_max)
}

/// `(alpha_T, beta_T)`.
pub fn thresholds(params: &ProtocolParams) -> (f64, f64) {
    (params.alpha_t(), params.beta_t())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub k: u64,
    pub n: usize,
    /// `dev(i) = sum_t (w_i X_i(t))^2`.
    pub dev: Vec<f64>,
    /// Row-major `n x n`, symmetric, zero diagonal: `sum_t w_i w_j X_i(t) X_j(t)`.
    pub corr: Vec<f64>,
    pub alpha_t: f64,
    pub beta_t: f64,
}

impl EpochStats {
    pub fn corr(&self, i: usize, j: usize) -> f64 {
        self.corr[i * self.n + j]
    }

    /// Whether `dev(i) <= w_i^2 alpha_T`.
    pub fn dev_within(&self, i: usize, w: &[f64]) -> bool {
        self.dev[i] <= w[i] * w[i] * self.alpha_t
    }

    /// Whether `corr(i, j) <= w_i w_j beta_T`.
    pub fn corr_within(&self, i: usize, j: usize, w: &[f64]) -> bool {
        self.corr(i, j) <= w[i] * w[j] * self.beta_t
    }
}

/// Accumulates one epoch of clamped sums under fixed weights.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    n: usize,
    weights: Vec<f64>,
    dev: Vec<CompensatedSum>,
    corr: Vec<CompensatedSum>,
    iterations: usize,
}

impl StatsAccumulator {
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        StatsAccumulator {
            n,
            weights: weights.to_vec(),
            dev: vec![CompensatedSum::default(); n],
            corr: vec![CompensatedSum::default(); n * (n.saturating_sub(1)) / 2],
            iterations: 0,
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Adds one iteration's clamped sums `X_i(t)`.
    pub fn push(&mut self, xs: &[f64]) {
        assert_eq!(xs.len(), self.n);
        let y: Vec<f64> = xs.iter().zip(&self.weights).map(|(x, w)| x * w).collect();
        let mut k = 0;
        for i in 0..self.n {
            self.dev[i].add(y[i] * y[i]);
            for j in i + 1..self.n {
                self.corr[k].add(y[i] * y[j]);
                k += 1;
            }
        }
        self.iterations += 1;
    }

    pub fn finish(&self, k: u64, params: &ProtocolParams) -> EpochStats {
        let n = self.n;
        let mut corr = vec![0.0; n * n];
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                let v = self.corr[idx].value();
                corr[i * n + j] = v;
                corr[j * n + i] = v;
                idx += 1;
            }
        }
        let (alpha_t, beta_t) = thresholds(params);
        EpochStats {
            k,
            n,
            dev: self.dev.iter().map(CompensatedSum::value).collect(),
            corr,
            alpha_t,
            beta_t,
        }
    }
}

/// Statistics of one epoch from its `T x n` clamped sums.
pub fn compute_stats(
    sums: &[Vec<f64>],
    weights: &[f64],
    params: &ProtocolParams,
    k: u64,
) -> EpochStats {
    let mut acc = StatsAccumulator::new(weights);
    for xs in sums {
        acc.push(xs);
    }
    acc.finish(k, params)
}

/// Tab-separated: `k alpha_t beta_t dev corr_upper`, the vectors comma-separated,
/// `corr_upper` row-major over `i < j`.
pub fn write_stats_tsv<W: Write>(records: &[EpochStats], mut w: W) -> io::Result<()> {
    writeln!(w, "k\talpha_t\tbeta_t\tdev\tcorr_upper")?;
    for s in records {
        let dev: Vec<String> = s.dev.iter().map(|x| x.to_string()).collect();
        let mut upper = Vec::new();
        for i in 0..s.n {
            for j in i + 1..s.n {
                upper.push(s.corr(i, j).to_string());
            }
        }
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            s.k,
            s.alpha_t,
            s.beta_t,
            dev.join(","),
            upper.join(",")
        )?;
    }
    Ok(())
}
