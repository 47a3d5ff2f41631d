//! Protocol parameters and the thresholds derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A coin value or agreement input in `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Neg => -1,
            Sign::Pos => 1,
        }
    }

    /// `sgn(x) = +1` for `x >= 0`, `-1` otherwise.
    pub fn of(x: f64) -> Sign {
        if x >= 0.0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn of_int(x: i64) -> Sign {
        if x >= 0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn from_value(v: i64) -> Option<Sign> {
        match v {
            1 => Some(Sign::Pos),
            -1 => Some(Sign::Neg),
            _ => None,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Pos => Sign::Neg,
        }
    }
}

impl std::ops::Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        self.flip()
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("n must be at least 2 (got {0})")]
    TooFewProcesses(usize),
    #[error("n = {n} exceeds the supported maximum of {max}")]
    TooManyProcesses { n: usize, max: usize },
    #[error("fault budget f = {f} violates {bound} for n = {n}")]
    FaultBudget {
        n: usize,
        f: usize,
        bound: &'static str,
    },
    #[error("{field} must be at least 1")]
    Zero { field: &'static str },
    #[error("{field} must be positive and finite (got {value})")]
    NonPositive { field: &'static str, value: f64 },
}

/// Which resilience bound a configuration must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resilience {
    /// Full coin-flipping game: `f < n/4`.
    RealGame,
    /// Broadcast and blackboard suites only: `f < n/3`.
    BlackboardOnly,
}

/// Largest supported process count (sender sets are 128-bit masks).
pub const MAX_PROCESSES: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub f: usize,
    /// Resilience slack: `n = (4 + eps) f`.
    pub eps: f64,
    /// Blackboard rows.
    pub m: usize,
    /// Iterations per epoch.
    pub t_iters: usize,
    /// Concentration constant.
    pub c: f64,
    /// Epochs before a restart with all weights reset to 1.
    pub k_max: usize,
    /// Fairness window in events.
    pub fairness_window: u64,
}

impl ProtocolParams {
    /// Parameters with every Θ-constant at its default.
    ///
    /// `eps` is taken from `n = (4 + eps) f` when that is positive, and 1 otherwise.
    pub fn new(n: usize, f: usize) -> Self {
        let eps = Self::natural_eps(n, f);
        let ln_n = (n.max(2) as f64).ln();
        let m = 8usize.max(4 * (n as f64 / (eps * eps)).ceil() as usize);
        let t_iters =
            16usize.max((n as f64 * n as f64 * ln_n.powi(3) / (eps * eps)).ceil() as usize);
        ProtocolParams {
            n,
            f,
            eps,
            m,
            t_iters,
            c: 4.0,
            k_max: Self::default_k_max(f),
            fairness_window: 10 * (n as u64) * (n as u64),
        }
    }

    /// Small blackboards and short epochs, suited to message-level simulation.
    pub fn desk(n: usize, f: usize, m: usize, t_iters: usize) -> Self {
        ProtocolParams {
            m,
            t_iters,
            ..Self::new(n, f)
        }
    }

    pub fn natural_eps(n: usize, f: usize) -> f64 {
        if f == 0 {
            return 1.0;
        }
        let e = n as f64 / f as f64 - 4.0;
        if e > 0.0 {
            e
        } else {
            1.0
        }
    }

    /// `K_max = ceil(2.5 f)`, at least one epoch.
    pub fn default_k_max(f: usize) -> usize {
        ((2.5 * f as f64).ceil() as usize).max(1)
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_fairness_window(mut self, w: u64) -> Self {
        self.fairness_window = w;
        self
    }

    pub fn validate(&self, resilience: Resilience) -> Result<(), ParamsError> {
        if self.n < 2 {
            return Err(ParamsError::TooFewProcesses(self.n));
        }
        if self.n > MAX_PROCESSES {
            return Err(ParamsError::TooManyProcesses {
                n: self.n,
                max: MAX_PROCESSES,
            });
        }
        match resilience {
            Resilience::RealGame if 4 * self.f >= self.n => {
                return Err(ParamsError::FaultBudget {
                    n: self.n,
                    f: self.f,
                    bound: "f < n/4",
                })
            }
            Resilience::BlackboardOnly if 3 * self.f >= self.n => {
                return Err(ParamsError::FaultBudget {
                    n: self.n,
                    f: self.f,
                    bound: "f < n/3",
                })
            }
            _ => {}
        }
        if self.m == 0 {
            return Err(ParamsError::Zero { field: "m" });
        }
        if self.t_iters == 0 {
            return Err(ParamsError::Zero { field: "T" });
        }
        if self.k_max == 0 {
            return Err(ParamsError::Zero { field: "K_max" });
        }
        if self.fairness_window == 0 {
            return Err(ParamsError::Zero {
                field: "fairness window",
            });
        }
        for (field, value) in [("eps", self.eps), ("c", self.c)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamsError::NonPositive { field, value });
            }
        }
        Ok(())
    }

    /// `n - f`, the number of messages every wait collects.
    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    fn c_ln_n(&self) -> f64 {
        self.c * (self.n as f64).ln()
    }

    /// `alpha_T = m (T + sqrt(T (c ln n)^3))`.
    pub fn alpha_t(&self) -> f64 {
        self.m as f64 * (self.t_iters as f64 + self.sqrt_term())
    }

    /// `beta_T = m sqrt(T (c ln n)^3)`.
    pub fn beta_t(&self) -> f64 {
        self.m as f64 * self.sqrt_term()
    }

    fn sqrt_term(&self) -> f64 {
        (self.t_iters as f64 * self.c_ln_n().powi(3)).sqrt()
    }

    /// `X_max = sqrt(c m ln n)`.
    pub fn x_max(&self) -> f64 {
        (self.m as f64 * self.c_ln_n()).sqrt()
    }

    /// `w_min = sqrt(n ln n) / T`.
    pub fn w_min(&self) -> f64 {
        let n = self.n as f64;
        (n * n.ln()).sqrt() / self.t_iters as f64
    }

    /// Allowed excess of good weight loss over bad weight loss: `eps^2 f / 8`.
    pub fn weight_slack(&self) -> f64 {
        self.eps * self.eps * self.f as f64 / 8.0
    }

    /// Scale `16 / (eps f alpha_T)` applied to dev/corr excesses; `f` is floored at 1.
    pub fn excess_scale(&self) -> f64 {
        16.0 / (self.eps * self.f.max(1) as f64 * self.alpha_t())
    }
}
