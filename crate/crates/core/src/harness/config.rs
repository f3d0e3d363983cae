//! Run configuration: benchmark preset, agent choice, and every module's
//! settings, loaded from TOML on top of the preset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, LearnerConfig};
use crate::driver::DriverKind;
use crate::env::{EnvConfig, ObservationMode};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, NetworkConfig};
use crate::replay::ReplayConfig;
use crate::safety::{BlindSpotWindow, SafetyLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "A", alias = "a")]
    A,
    #[serde(rename = "B", alias = "b")]
    B,
}

impl Benchmark {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" | "a" => Some(Benchmark::A),
            "B" | "b" => Some(Benchmark::B),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::A => "A",
            Benchmark::B => "B",
        }
    }

    pub fn env(self) -> EnvConfig {
        match self {
            Benchmark::A => EnvConfig::benchmark_a(),
            Benchmark::B => EnvConfig::benchmark_b(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Rainbow,
    RainbowBlindspot,
    RainbowBlindspotComp,
    DoubleDqn,
    MobilTimid,
    MobilAggressive,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Rainbow,
        AgentKind::RainbowBlindspot,
        AgentKind::RainbowBlindspotComp,
        AgentKind::DoubleDqn,
        AgentKind::MobilTimid,
        AgentKind::MobilAggressive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Rainbow => "rainbow",
            AgentKind::RainbowBlindspot => "rainbow_blindspot",
            AgentKind::RainbowBlindspotComp => "rainbow_blindspot_comp",
            AgentKind::DoubleDqn => "double_dqn",
            AgentKind::MobilTimid => "mobil_timid",
            AgentKind::MobilAggressive => "mobil_aggressive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_").to_ascii_lowercase();
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn is_learned(self) -> bool {
        !matches!(self, AgentKind::MobilTimid | AgentKind::MobilAggressive)
    }

    pub fn is_distributional(self) -> bool {
        matches!(
            self,
            AgentKind::Rainbow | AgentKind::RainbowBlindspot | AgentKind::RainbowBlindspotComp
        )
    }

    pub fn uses_safety_layer(self) -> bool {
        matches!(self, AgentKind::RainbowBlindspot | AgentKind::RainbowBlindspotComp)
    }

    /// Driver profile of the ego when MOBIL drives it.
    pub fn mobil_profile(self) -> Option<DriverKind> {
        match self {
            AgentKind::MobilTimid => Some(DriverKind::Timid),
            AgentKind::MobilAggressive => Some(DriverKind::Aggressive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub benchmark: Benchmark,
    pub agent: AgentKind,
    pub total_steps: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub checkpoint_every: u64,
    /// Trailing window of the reward curve, in episodes.
    pub trailing_window: usize,
    pub eval_workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvConfig,
    pub safety: BlindSpotWindow,
    pub agent: AgentConfig,
    pub network: NetworkConfig,
    pub replay: ReplayConfig,
    pub optimizer: AdamConfig,
}

/// Recursively overlays `top` onto `base`; tables merge key by key, any
/// other value replaces.
pub fn merge_toml(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    pub fn preset(benchmark: Benchmark, agent: AgentKind) -> Self {
        let mut c = Self {
            run: RunSection {
                benchmark,
                agent,
                total_steps: 50_000,
                eval_episodes: 100,
                seeds: vec![0, 1, 2],
                checkpoint_every: 10_000,
                trailing_window: 100,
                eval_workers: 1,
            },
            env: benchmark.env(),
            safety: BlindSpotWindow::default(),
            agent: AgentConfig::default(),
            network: NetworkConfig::default(),
            replay: ReplayConfig::default(),
            optimizer: AdamConfig::default(),
        };
        c.apply_agent_rules();
        c
    }

    /// Builds a config from TOML text on top of the preset named by
    /// `benchmark` (or the text's `run.benchmark`, or A).
    pub fn from_toml_str(text: &str, benchmark: Option<Benchmark>, agent: Option<AgentKind>) -> Result<Self> {
        let user: toml::Value = toml::from_str(text)?;
        let pick = |key: &str| user.get("run").and_then(|r| r.get(key)).and_then(|v| v.as_str()).map(str::to_owned);
        let benchmark = match benchmark {
            Some(b) => b,
            None => match pick("benchmark") {
                Some(s) => Benchmark::parse(&s).ok_or_else(|| Error::Config(format!("unknown benchmark {s:?}")))?,
                None => Benchmark::A,
            },
        };
        let agent = match agent {
            Some(a) => a,
            None => match pick("agent") {
                Some(s) => AgentKind::parse(&s).ok_or_else(|| Error::Config(format!("unknown agent {s:?}")))?,
                None => AgentKind::RainbowBlindspot,
            },
        };
        let mut value = toml::Value::try_from(Self::preset(benchmark, agent))?;
        merge_toml(&mut value, user);
        let mut config: RunConfig = value.try_into()?;
        config.run.benchmark = benchmark;
        config.run.agent = agent;
        config.apply_agent_rules();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, benchmark: Option<Benchmark>, agent: Option<AgentKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, benchmark, agent)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Settings implied by the agent kind.
    pub fn apply_agent_rules(&mut self) {
        if self.run.agent == AgentKind::RainbowBlindspotComp {
            self.env.observation.mode = ObservationMode::Compact;
        }
        if let Some(kind) = self.run.agent.mobil_profile() {
            self.env.scenario.ego_profile = kind;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |r: std::result::Result<(), String>| r.map_err(Error::Config);
        check(self.env.validate())?;
        check(self.safety.validate())?;
        check(self.learner().validate())?;
        if self.run.checkpoint_every == 0 || self.run.trailing_window == 0 || self.run.eval_workers == 0 {
            return Err(Error::Config(
                "checkpoint_every, trailing_window and eval_workers must be positive".into(),
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.run.agent == AgentKind::RainbowBlindspotComp && self.env.observation.mode != ObservationMode::Compact {
            return Err(Error::Config("rainbow_blindspot_comp requires the compact observation".into()));
        }
        if let Some(kind) = self.run.agent.mobil_profile() {
            if self.env.scenario.ego_profile != kind {
                return Err(Error::Config("MOBIL agent and ego profile disagree".into()));
            }
        }
        Ok(())
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            agent: self.agent.clone(),
            network: self.network.clone(),
            replay: self.replay.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn safety_layer(&self) -> Option<SafetyLayer> {
        self.run.agent.uses_safety_layer().then(|| SafetyLayer::new(self.safety))
    }

    /// Canonical single-line JSON of the whole configuration.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
