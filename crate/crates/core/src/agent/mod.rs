//! Learning agents (Rainbow and the Double DQN baseline) and the rule-based
//! MOBIL ego policy.

pub mod dqn;
pub mod mobil;
pub mod projection;
pub mod rainbow;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::Result;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{AdamConfig, NetworkConfig};
use crate::replay::{ReplayConfig, StepRecord};
use crate::scalar::Scalar;

pub use dqn::DoubleDqnAgent;
pub use mobil::mobil_ego_action;
pub use projection::{project_distribution, Support};
pub use rainbow::RainbowAgent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    /// Training steps between target network copies.
    pub target_sync: u64,
    /// Environment steps collected before the first update.
    pub train_start: u64,
    pub train_every: u64,
    /// Epsilon-greedy schedule, used by the Double DQN baseline only.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_steps: u64,
    /// Huber loss threshold of the baseline.
    pub huber_kappa: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            target_sync: 500,
            train_start: 1000,
            train_every: 1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_steps: 100_000,
            huber_kappa: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must lie in (0, 1]".into());
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.train_every == 0 || self.epsilon_steps == 0 {
            return Err("agent counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err("epsilon values must lie in [0, 1]".into());
        }
        if !(self.huber_kappa > 0.0) {
            return Err("huber_kappa must be positive".into());
        }
        Ok(())
    }

    pub fn epsilon(&self, t: u64) -> f64 {
        let frac = (t as f64 / self.epsilon_steps as f64).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Everything a learning agent is built from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub agent: AgentConfig,
    pub network: NetworkConfig,
    pub replay: ReplayConfig,
    pub optimizer: AdamConfig,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.agent.validate()?;
        self.network.validate()?;
        self.replay.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    /// Mean per-sample loss before importance weighting.
    pub loss: f64,
    pub grad_norm: f64,
    pub target_synced: bool,
}

/// Progress counters saved alongside the tensors of a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentCounters {
    pub env_steps: u64,
    pub train_steps: u64,
    pub optimizer_steps: u64,
}

/// Per-action atom probabilities and expectations for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct QDistribution {
    pub support: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
    pub expected: Vec<f64>,
}

/// Common surface of the learning agents used by the harness.
pub trait Learner: Send + Sync {
    /// Deterministic evaluation action (mean weights, no exploration).
    fn greedy(&self, obs: &[f32]) -> Action;
    /// `explore` selects the training-time behavior (noise or epsilon).
    fn act(&mut self, obs: &[f32], explore: bool, rng: &mut ChaCha8Rng) -> Action;
    /// Records one environment step and trains when the schedule says so.
    fn observe(&mut self, record: StepRecord, rng: &mut ChaCha8Rng) -> Result<Option<TrainStats>>;
    fn counters(&self) -> AgentCounters;
    fn input_len(&self) -> usize;
    fn save_tensors(&self, ck: &mut Checkpoint);
    fn restore(&mut self, ck: &Checkpoint, counters: AgentCounters) -> Result<()>;
}

pub(crate) fn to_scalars<T: Scalar>(obs: &[f32]) -> Vec<T> {
    obs.iter().map(|&x| T::of(x as f64)).collect()
}

pub(crate) fn should_train(config: &AgentConfig, env_steps: u64, available: usize) -> bool {
    env_steps >= config.train_start && env_steps % config.train_every == 0 && available >= config.batch_size
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let c = AgentConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(50_000) - 0.525).abs() < 1e-12);
        assert!((c.epsilon(100_000) - 0.05).abs() < 1e-12);
        assert!((c.epsilon(1_000_000) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn learner_config_round_trips_through_toml() {
        let c = LearnerConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: LearnerConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: LearnerConfig = toml::from_str("[agent]\nbatch_size = 8\n").unwrap();
        assert_eq!(partial.agent.batch_size, 8);
        assert_eq!(partial.agent.gamma, 0.99);
    }
}
