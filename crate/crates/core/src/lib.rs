//! Tactical lane-change decision making on a simulated highway.
//!
//! The simulator (`traffic`, `driver`, `env`, `safety`) runs in `f64`. The
//! learning stack (`nn`, `agent`) is generic over [`scalar::Scalar`]; the
//! aliases below fix the precision used for training and for numerical
//! checks.

pub mod agent;
pub mod driver;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod safety;
pub mod scalar;
pub mod traffic;

pub use error::{Error, Result};

/// Precision used for training.
pub type Real = f32;

pub type Rainbow = agent::RainbowAgent<Real>;
pub type DoubleDqn = agent::DoubleDqnAgent<Real>;
pub type Rainbow64 = agent::RainbowAgent<f64>;
pub type DoubleDqn64 = agent::DoubleDqnAgent<f64>;
