//! Adversary strategies: scheduling, corruption, and what corrupted processes write.

mod game;
mod message;

use std::collections::BTreeMap;

use thiserror::Error;

pub use game::{
    ambiguity_for, counteract_bad_values, AmbiguityPolicy, GameColluding, GameCounteract,
    GameCrash, GameHonest,
};
pub use message::{
    directions, random_subset, Colluding, Counteract, CrashStop, Equivocator, HonestRandom,
    StarveSubset,
};

use crate::agreement::Node;
use crate::broadcast::RbProcess;
use crate::game::GameAdversary;
use crate::params::ProtocolParams;
use crate::sim::{Adversary, ProcessSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown adversary {0:?}")]
    Unknown(String),
    #[error("adversary {name} has no game-level form")]
    NoGameForm { name: String },
    #[error("bad value {value:?} for adversary argument {key}")]
    BadArg { key: String, value: String },
}

pub const STRATEGY_NAMES: &[&str] = &[
    "honest-random",
    "crash-stop",
    "counteract",
    "colluding",
    "starve-subset",
];

/// Adversary arguments as `key=value` pairs.
pub type AdversaryArgs = BTreeMap<String, String>;

fn arg<T: std::str::FromStr>(
    args: &AdversaryArgs,
    key: &str,
    default: T,
) -> Result<T, AdversaryError> {
    match args.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| AdversaryError::BadArg {
            key: key.into(),
            value: v.clone(),
        }),
    }
}

/// A message-level strategy plus the processes it keeps from running, if any.
pub struct MessageStrategy {
    pub adversary: Box<dyn Adversary<RbProcess<Node>>>,
    pub starved: ProcessSet,
}

/// Builds a message-level strategy by name. Arguments: `crashes`, `horizon`
/// (crash-stop), `k` (starve-subset), `corrupt-at` (counteract, event ordinal).
pub fn message_strategy(
    name: &str,
    args: &AdversaryArgs,
    params: &ProtocolParams,
    seed: u64,
) -> Result<MessageStrategy, AdversaryError> {
    let f = params.f;
    let none = ProcessSet::default();
    Ok(match name {
        "honest-random" => MessageStrategy {
            adversary: Box::new(HonestRandom::new(seed)),
            starved: none,
        },
        "crash-stop" => MessageStrategy {
            adversary: Box::new(CrashStop::new(
                seed,
                arg(args, "crashes", f)?,
                arg(args, "horizon", 5_000)?,
            )),
            starved: none,
        },
        "counteract" => MessageStrategy {
            adversary: Box::new(Counteract::corrupting_at(
                seed,
                f,
                arg(args, "corrupt-at", 0)?,
            )),
            starved: none,
        },
        "colluding" => MessageStrategy {
            adversary: Box::new(Colluding::new(seed, f)),
            starved: none,
        },
        "starve-subset" => {
            let s = StarveSubset::random(seed, params.n, arg(args, "k", f)?.min(f));
            let starved = s.starved();
            MessageStrategy {
                adversary: Box::new(s),
                starved,
            }
        }
        other => return Err(AdversaryError::Unknown(other.into())),
    })
}

/// Builds a game-level strategy by name. Argument `ambiguity` is `off`, `push` or `split`.
pub fn game_strategy(
    name: &str,
    args: &AdversaryArgs,
) -> Result<Box<dyn GameAdversary>, AdversaryError> {
    let policy = match args.get("ambiguity").map(String::as_str) {
        None | Some("push") => AmbiguityPolicy::Push,
        Some("split") => AmbiguityPolicy::Split,
        Some("off") => AmbiguityPolicy::Off,
        Some(v) => {
            return Err(AdversaryError::BadArg {
                key: "ambiguity".into(),
                value: v.into(),
            })
        }
    };
    Ok(match name {
        "honest-random" => Box::new(GameHonest),
        "crash-stop" => Box::new(GameCrash),
        "counteract" => Box::new(GameCounteract { ambiguity: policy }),
        "colluding" => Box::new(GameColluding),
        "starve-subset" => return Err(AdversaryError::NoGameForm { name: name.into() }),
        other => return Err(AdversaryError::Unknown(other.into())),
    })
}

#[cfg(test)]
mod tests;
