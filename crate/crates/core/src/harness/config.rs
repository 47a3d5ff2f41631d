//! Experiment configuration: defaults, `key=value` files and validation.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryArgs;
use crate::params::{ProtocolParams, Resilience, Sign};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Which engine runs the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Every message through the simulated network.
    Message,
    /// Abstracted blackboard; weights and statistics only.
    Game,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSpec {
    Unanimous(Sign),
    /// Alternating `+1, -1, ...` by process id.
    Split,
    /// Independent fair inputs drawn from the seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopSpec {
    Decided,
    Events(u64),
    Epochs(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: ProtocolParams,
    pub mode: RunMode,
    pub adversary: String,
    pub adversary_args: AdversaryArgs,
    pub seeds: Vec<u64>,
    pub inputs: InputSpec,
    pub stop: StopSpec,
    /// Hard cap on events per message-level run.
    pub max_events: u64,
    /// Epochs per game-level run.
    pub epochs: u64,
    /// Candidate value the game-level adversary pushes against.
    pub candidate: Option<Sign>,
    pub force_bad_weights_zero: bool,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn new(params: ProtocolParams) -> Self {
        ExperimentConfig {
            params,
            mode: RunMode::Message,
            adversary: "honest-random".into(),
            adversary_args: BTreeMap::new(),
            seeds: vec![0],
            inputs: InputSpec::Random,
            stop: StopSpec::Decided,
            max_events: 50_000_000,
            epochs: 1,
            candidate: None,
            force_bad_weights_zero: false,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate(Resilience::RealGame)
            .map_err(|e| invalid("params", e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "empty"));
        }
        if self.mode == RunMode::Game && self.epochs == 0 {
            return Err(invalid("epochs", "must be at least 1"));
        }
        if !crate::adversary::STRATEGY_NAMES.contains(&self.adversary.as_str()) {
            return Err(invalid(
                "adversary",
                format!("unknown strategy {:?}", self.adversary),
            ));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "n" => self.params.n = num(key, v)?,
            "f" => self.params.f = num(key, v)?,
            "eps" => self.params.eps = num(key, v)?,
            "m" => self.params.m = num(key, v)?,
            "T" | "t" => self.params.t_iters = num(key, v)?,
            "c" => self.params.c = num(key, v)?,
            "kmax" => self.params.k_max = num(key, v)?,
            "fairness-window" | "fairness_window" => self.params.fairness_window = num(key, v)?,
            "mode" => {
                self.mode = match v {
                    "message" => RunMode::Message,
                    "game" => RunMode::Game,
                    _ => return Err(invalid(key, format!("expected message or game, got {v:?}"))),
                }
            }
            "adversary" => self.adversary = v.to_string(),
            "adversary-arg" | "adversary_arg" => {
                let (k, a) = v
                    .split_once('=')
                    .ok_or_else(|| invalid(key, "expected k=v"))?;
                self.adversary_args.insert(k.trim().into(), a.trim().into());
            }
            "seed" => self.seeds = vec![num(key, v)?],
            "seeds" => self.seeds = parse_seeds(v)?,
            "inputs" => self.inputs = parse_inputs(v)?,
            "stop" => self.stop = parse_stop(v)?,
            "max-events" | "max_events" => self.max_events = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "candidate" => {
                self.candidate = match v {
                    "none" => None,
                    "+1" | "1" | "pos" => Some(Sign::Pos),
                    "-1" | "neg" => Some(Sign::Neg),
                    _ => return Err(invalid(key, format!("expected none, +1 or -1, got {v:?}"))),
                }
            }
            "force-bad-weights-zero" | "force_bad_weights_zero" => {
                self.force_bad_weights_zero = num(key, v)?
            }
            "out" => self.out = Some(v.to_string()),
            other => return Err(invalid(other, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `key=value` file; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (line, k, v) in file_lines(text)? {
            self.set(&k, &v).map_err(|e| ConfigError::Syntax {
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Desk-scale defaults (`n = 9, m = 8, T = 64`, `f = floor((n - 1) / 4)`)
    /// with the settings applied in order, later ones winning. `n` and `f` pick the base
    /// parameters, so derived constants follow them.
    pub fn from_settings(settings: &[(String, String)]) -> Result<Self, ConfigError> {
        let last = |key: &str| {
            settings
                .iter()
                .rev()
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim())
        };
        let n = last("n").map_or(Ok(DESK_N), |v| num("n", v))?;
        let f = last("f").map_or(Ok(n.saturating_sub(1) / 4), |v| num("f", v))?;
        let mut cfg = ExperimentConfig::new(ProtocolParams::desk(n, f, DESK_M, DESK_T));
        for (k, v) in settings {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

pub const DESK_N: usize = 9;
pub const DESK_M: usize = 8;
pub const DESK_T: usize = 64;

/// `(line, key, value)` for every non-blank line of a config file.
pub fn file_lines(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| invalid(key, format!("cannot parse {v:?}")))
}

/// `a..b` (exclusive), `a..=b`, or a comma-separated list.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>, ConfigError> {
    if let Some((a, b)) = v.split_once("..=") {
        let (a, b): (u64, u64) = (num("seeds", a)?, num("seeds", b)?);
        return Ok((a..=b).collect());
    }
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (num("seeds", a)?, num("seeds", b)?);
        return Ok((a..b).collect());
    }
    v.split(',').map(|s| num("seeds", s.trim())).collect()
}

pub fn parse_inputs(v: &str) -> Result<InputSpec, ConfigError> {
    Ok(match v {
        "random" => InputSpec::Random,
        "split" => InputSpec::Split,
        "+1" | "1" | "pos" => InputSpec::Unanimous(Sign::Pos),
        "-1" | "neg" => InputSpec::Unanimous(Sign::Neg),
        _ => {
            return Err(invalid(
                "inputs",
                format!("expected random, split, +1 or -1, got {v:?}"),
            ))
        }
    })
}

/// `decided`, `events:N` or `epochs:K`.
pub fn parse_stop(v: &str) -> Result<StopSpec, ConfigError> {
    match v.split_once(':') {
        None if v == "decided" => Ok(StopSpec::Decided),
        Some(("events", k)) => Ok(StopSpec::Events(num("stop", k)?)),
        Some(("epochs", k)) => Ok(StopSpec::Epochs(num("stop", k)?)),
        _ => Err(invalid(
            "stop",
            format!("expected decided, events:N or epochs:K, got {v:?}"),
        )),
    }
}
