//! Run checkpoints: a JSON header describing the run followed by the
//! learner's tensors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentCounters, Learner};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::nn::checkpoint::Checkpoint;
use crate::{DoubleDqn, Rainbow};

pub const RUN_SCHEMA: &str = "lanechange-run v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema: String,
    pub config: RunConfig,
    /// Canonical echo of `config`, compared verbatim on resume.
    pub config_echo: String,
    pub seed: u64,
    pub step: u64,
    pub episodes: u64,
    pub counters: AgentCounters,
    pub settling_step: u64,
    pub trailing_reward: f64,
}

/// Fresh learner for the configured agent. MOBIL agents have nothing to
/// learn and are rejected.
pub fn build_learner<R: Rng + ?Sized>(config: &RunConfig, rng: &mut R) -> Result<Box<dyn Learner>> {
    let slots = config.env.observation_slots();
    let kind = config.run.agent;
    if !kind.is_learned() {
        return Err(Error::Config(format!("{} is rule-based and cannot be trained", kind.as_str())));
    }
    Ok(if kind.is_distributional() {
        Box::new(Rainbow::new(config.learner(), slots, rng))
    } else {
        Box::new(DoubleDqn::new(config.learner(), slots, rng))
    })
}

pub fn save_checkpoint(path: &Path, header: &RunHeader, learner: &dyn Learner) -> Result<()> {
    let mut ck = Checkpoint::new(serde_json::to_value(header)?);
    learner.save_tensors(&mut ck);
    ck.save(path)
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub header: RunHeader,
    pub checkpoint: Checkpoint,
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let checkpoint = Checkpoint::load(path)?;
    let header: RunHeader = serde_json::from_value(checkpoint.header.clone())?;
    if header.schema != RUN_SCHEMA {
        return Err(Error::Checkpoint(format!("unsupported run schema {:?}", header.schema)));
    }
    if header.config.echo() != header.config_echo {
        return Err(Error::Checkpoint("config echo does not match the embedded config".into()));
    }
    Ok(LoadedCheckpoint { header, checkpoint })
}

impl LoadedCheckpoint {
    /// Learner with the saved parameters, optimizer moments and counters.
    /// Initialization randomness is irrelevant since every tensor is
    /// overwritten.
    pub fn learner(&self) -> Result<Box<dyn Learner>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut learner = build_learner(&self.header.config, &mut rng)?;
        learner.restore(&self.checkpoint, self.header.counters)?;
        Ok(learner)
    }

    pub fn rainbow(&self) -> Result<Rainbow> {
        let config = &self.header.config;
        if !config.run.agent.is_distributional() {
            return Err(Error::Config(format!(
                "{} has no value distribution",
                config.run.agent.as_str()
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut agent = Rainbow::new(config.learner(), config.env.observation_slots(), &mut rng);
        agent.restore(&self.checkpoint, self.header.counters)?;
        Ok(agent)
    }
}
