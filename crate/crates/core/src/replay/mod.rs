//! Experience replay: n-step transition assembly and proportional
//! prioritized sampling.

pub mod sum_tree;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EpisodeStatus};
use crate::error::{Error, Result};

pub use sum_tree::SumTree;

/// Priority floor added to every loss.
pub const PRIORITY_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub n_step: usize,
    /// Priority exponent; 0 gives uniform sampling.
    pub priority_exponent: f64,
    pub beta_start: f64,
    pub beta_steps: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 50_000,
            n_step: 2,
            priority_exponent: 0.6,
            beta_start: 0.4,
            beta_steps: 100_000,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.capacity == 0 || self.n_step == 0 || self.beta_steps == 0 {
            return Err("replay capacity, n_step and beta_steps must be positive".into());
        }
        if !(self.priority_exponent >= 0.0) {
            return Err("priority_exponent must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.beta_start) {
            return Err("beta_start must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Importance-sampling exponent after `t` agent steps.
    pub fn beta(&self, t: u64) -> f64 {
        (self.beta_start + t as f64 * (1.0 - self.beta_start) / self.beta_steps as f64).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    None,
    Solved,
    Collided,
    Truncated,
}

impl From<EpisodeStatus> for TerminalKind {
    fn from(s: EpisodeStatus) -> Self {
        match s {
            EpisodeStatus::Running => TerminalKind::None,
            EpisodeStatus::Solved => TerminalKind::Solved,
            EpisodeStatus::Collided => TerminalKind::Collided,
            EpisodeStatus::Truncated => TerminalKind::Truncated,
        }
    }
}

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub observation: Vec<f32>,
    pub action: Action,
    pub reward: f64,
    pub next_observation: Vec<f32>,
    pub status: EpisodeStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f32>,
    pub action: Action,
    /// `sum_k gamma^k r_{t+k}` over the window.
    pub reward: f64,
    pub next_observation: Vec<f32>,
    /// `gamma^len`, or 0 when the window ended in a true terminal.
    pub discount: f64,
    pub terminal: TerminalKind,
}

/// Sliding window turning step records into n-step transitions.
#[derive(Debug, Clone)]
pub struct NStepAssembler {
    n: usize,
    gamma: f64,
    window: VecDeque<StepRecord>,
}

impl NStepAssembler {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n > 0, "n-step horizon must be positive");
        Self {
            n,
            gamma,
            window: VecDeque::with_capacity(n),
        }
    }

    fn emit(&self, start: usize, terminal: TerminalKind) -> Transition {
        let first = &self.window[start];
        let last = self.window.back().expect("non-empty window");
        let mut reward = 0.0;
        let mut g = 1.0;
        for rec in self.window.iter().skip(start) {
            reward += g * rec.reward;
            g *= self.gamma;
        }
        let discount = match terminal {
            TerminalKind::Solved | TerminalKind::Collided => 0.0,
            TerminalKind::None | TerminalKind::Truncated => g,
        };
        Transition {
            observation: first.observation.clone(),
            action: first.action,
            reward,
            next_observation: last.next_observation.clone(),
            discount,
            terminal,
        }
    }

    /// Feeds one step; returns the transitions completed by it. An episode
    /// end flushes the whole window with shortened horizons.
    pub fn push(&mut self, record: StepRecord) -> Vec<Transition> {
        let status = record.status;
        self.window.push_back(record);
        if status.is_done() {
            let out = (0..self.window.len()).map(|k| self.emit(k, status.into())).collect();
            self.window.clear();
            out
        } else if self.window.len() == self.n {
            let t = self.emit(0, TerminalKind::None);
            self.window.pop_front();
            vec![t]
        } else {
            Vec::new()
        }
    }

    /// Drops a partial window, e.g. when an episode is abandoned.
    pub fn clear(&mut self) {
        self.window.clear();
    }
}

#[derive(Debug, Clone)]
pub struct SampledBatch<'a> {
    pub indices: Vec<usize>,
    /// Importance weights normalized by the batch maximum.
    pub weights: Vec<f64>,
    pub transitions: Vec<&'a Transition>,
}

/// Ring buffer with proportional prioritization over a sum tree. Leaves hold
/// `p^omega`.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    omega: f64,
    tree: SumTree,
    data: Vec<Transition>,
    next: usize,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, priority_exponent: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            omega: priority_exponent,
            tree: SumTree::new(capacity),
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.data.get(index)
    }

    /// Stores a transition at the current maximum priority, overwriting the
    /// oldest entry when full. Returns the slot used.
    pub fn push(&mut self, t: Transition) -> usize {
        let p = if self.data.is_empty() { 1.0 } else { self.tree.max_leaf() };
        let slot = self.next;
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[slot] = t;
        }
        self.tree.set(slot, p);
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    /// Stratified proportional sampling.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<SampledBatch<'_>> {
        if batch == 0 || self.data.len() < batch {
            return Err(Error::InsufficientReplay {
                available: self.data.len(),
                requested: batch,
            });
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let n = self.data.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let u = (k as f64 + rng.random::<f64>()) * segment;
            let i = self.tree.find(u).min(self.data.len() - 1);
            let p = self.tree.get(i) / total;
            indices.push(i);
            weights.push((n * p).powf(-beta));
        }
        let w_max = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= w_max;
        }
        let transitions = indices.iter().map(|&i| &self.data[i]).collect();
        Ok(SampledBatch {
            indices,
            weights,
            transitions,
        })
    }

    /// Sets leaf `i` to `(|loss_i| + eps)^omega`.
    pub fn update_priorities(&mut self, indices: &[usize], losses: &[f64]) -> Result<()> {
        assert_eq!(indices.len(), losses.len());
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.data.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.data.len(),
            });
        }
        for (&i, &loss) in indices.iter().zip(losses) {
            self.tree.set(i, (loss.abs() + PRIORITY_EPSILON).powf(self.omega));
        }
        Ok(())
    }
}
