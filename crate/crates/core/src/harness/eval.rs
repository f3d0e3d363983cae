//! Evaluation of a learned agent (mean weights, no exploration) or of the
//! MOBIL ego policy.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{mobil_ego_action, Learner};
use crate::env::{EpisodeTrace, HighwayEnv, TraceRow};
use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::metrics::{write_metrics, EpisodeMetrics, Summary, TrailingMean, EVAL_SCHEMA};

#[derive(Clone, Copy)]
pub enum Policy<'a> {
    Learned(&'a dyn Learner),
    Mobil,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    pub workers: usize,
    /// Directory receiving one trace CSV per episode.
    pub trace_dir: Option<PathBuf>,
    /// Copied into the summary; 0 for rule-based agents.
    pub settling_step: u64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EpisodeMetrics>,
    pub summary: Summary,
}

/// Seeds of the evaluation episodes. Evaluation draws from its own stream
/// so it never replays training episodes of the same seed.
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

pub fn trace_path(dir: &Path, episode: usize) -> PathBuf {
    dir.join(format!("trace_ep{episode:05}.csv"))
}

/// Plays one episode from `episode_seed` and returns its metrics (with a
/// zero trailing reward) and its trace.
pub fn play_episode(
    env: &mut HighwayEnv,
    policy: Policy<'_>,
    episode: u64,
    episode_seed: u64,
    config_echo: &str,
) -> Result<(EpisodeMetrics, EpisodeTrace)> {
    let mut obs = env.reset(episode_seed)?;
    let noise = env.config().scenario.noise;
    let mut trace = EpisodeTrace {
        episode_seed,
        config_echo: config_echo.to_string(),
        rows: Vec::new(),
    };
    let mut reward = 0.0;
    let mut violations = 0;
    loop {
        let action = match policy {
            Policy::Learned(learner) => learner.greedy(&obs.features),
            Policy::Mobil => {
                let (world, rng) = env.world_and_rng();
                mobil_ego_action(world, &noise, rng)
            }
        };
        let result = env.step(action);
        trace.rows.push(TraceRow::from_step(trace.rows.len() as u64, env.world(), &result));
        reward += result.reward;
        violations += u64::from(result.info.safety_violation);
        if result.status.is_done() {
            let (solved, collided, truncated) = EpisodeMetrics::outcome_flags(result.status);
            let row = EpisodeMetrics {
                episode,
                episode_seed,
                end_step: 0,
                reward,
                length: trace.rows.len() as u64,
                solved,
                collided,
                truncated,
                lane_changes: result.info.lane_changes_so_far as u64,
                safety_violations: violations,
                trailing_reward: 0.0,
            };
            return Ok((row, trace));
        }
        obs = result.observation;
    }
}

/// Runs `options.episodes` episodes, optionally spread over worker threads
/// that each own an environment. Results are merged by episode index, so
/// the report does not depend on the worker count.
pub fn run_evaluation(config: &RunConfig, policy: Policy<'_>, options: &EvalOptions) -> Result<EvalReport> {
    config.validate()?;
    let echo = config.echo();
    let seeds = episode_seeds(options.seed, options.episodes);
    if let Some(dir) = &options.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let workers = options.workers.clamp(1, options.episodes.max(1));
    let env = HighwayEnv::new(config.env.clone(), config.safety_layer())?;

    let worker = |w: usize| -> Result<Vec<EpisodeMetrics>> {
        let mut env = env.clone();
        let mut rows = Vec::new();
        for i in (w..seeds.len()).step_by(workers) {
            let (row, trace) = play_episode(&mut env, policy, i as u64, seeds[i], &echo)?;
            if let Some(dir) = &options.trace_dir {
                let mut f = BufWriter::new(File::create(trace_path(dir, i))?);
                trace.write(&mut f)?;
                f.flush()?;
            }
            rows.push(row);
        }
        Ok(rows)
    };

    let mut rows: Vec<EpisodeMetrics> = if workers == 1 {
        worker(0)?
    } else {
        let parts: Vec<Result<Vec<EpisodeMetrics>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers).map(|w| s.spawn(move || worker(w))).collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(seeds.len());
        for part in parts {
            all.extend(part?);
        }
        all
    };
    rows.sort_by_key(|r| r.episode);
    let mut trailing = TrailingMean::new(config.run.trailing_window);
    for r in &mut rows {
        r.trailing_reward = trailing.push(r.reward);
    }
    let summary = Summary::from_episodes(&rows, options.settling_step);
    Ok(EvalReport { rows, summary })
}

impl EvalReport {
    pub fn write<W: Write>(&self, out: W, config: &RunConfig, meta: &[(&str, String)]) -> Result<()> {
        let mut all = vec![
            ("benchmark", config.run.benchmark.as_str().to_string()),
            ("agent", config.run.agent.as_str().to_string()),
            ("config", config.echo()),
        ];
        all.extend(meta.iter().cloned());
        write_metrics(out, EVAL_SCHEMA, &all, &self.rows, &self.summary)
    }

    /// One line in the layout of the results tables.
    pub fn table_row(&self, config: &RunConfig) -> String {
        format!(
            "{:<24} {:>2}  solved {:>6.1}%  reward {:>8.2}  settling {}",
            config.run.agent.as_str(),
            config.run.benchmark.as_str(),
            100.0 * self.summary.solved_ratio,
            self.summary.mean_reward,
            self.summary.settling_step
        )
    }
}
