//! Simulation and protocol library for asynchronous Byzantine agreement in the
//! full-information model with a weighted, fraud-detecting shared coin.

pub mod adversary;
pub mod agreement;
pub mod blackboard;
pub mod broadcast;
pub mod digest;
pub mod game;
pub mod harness;
pub mod matching;
pub mod params;
pub mod sim;
pub mod simple_game;
pub mod stats;

pub use params::{ParamsError, ProtocolParams, Resilience, Sign};
