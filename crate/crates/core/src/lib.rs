//! Agent-based epidemic simulation as a reinforcement-learning environment.
//!
//! The crate is organized bottom-up:
//!
//! - [`abm`]: the layered SEIRD agent-based simulator.
//! - [`interventions`]: lockdown, testing, tracing and quarantine mechanics.
//! - [`rewards`]: health and economic rewards, action-change penalty, economic loss.
//! - [`env`]: reset/step environment with weekly decisions and delayed activation.
//! - [`agents`]: PPO and DQN with prioritized replay over small MLPs.
//! - [`baselines`]: fixed schedule policies.
//! - [`calibration`]: fitting seeding and transmission to observed series.
//! - [`analysis`]: reproduction number, economic loss and strategy comparison.
//! - [`runner`]: the workflows behind the `epirl` binary.

pub mod abm;
pub mod agents;
pub mod analysis;
pub mod baselines;
pub mod calibration;
pub mod config;
pub mod env;
pub mod error;
pub mod interventions;
pub mod rewards;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
