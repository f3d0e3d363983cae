//! Single-threaded training loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::Learner;
use crate::env::HighwayEnv;
use crate::error::{Error, Result};
use crate::harness::checkpoint::{build_learner, load_checkpoint, save_checkpoint, RunHeader, RUN_SCHEMA};
use crate::harness::config::RunConfig;
use crate::harness::metrics::{settling_step, write_metrics, EpisodeMetrics, Summary, TrailingMean, METRICS_SCHEMA};
use crate::replay::StepRecord;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics_path: PathBuf,
    pub curve_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub rows: Vec<EpisodeMetrics>,
    pub summary: Summary,
}

pub fn metrics_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("metrics_seed{seed}.csv"))
}

pub fn curve_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("curve_seed{seed}.csv"))
}

pub fn checkpoint_path(out: &Path, seed: u64, step: u64) -> PathBuf {
    out.join(format!("checkpoint_seed{seed}_step{step:08}.bin"))
}

pub fn run_training(config: &RunConfig, seed: u64, out: &Path) -> Result<TrainOutcome> {
    run_training_with(config, seed, out, None, &mut |_| {})
}

/// Trains `config.run.total_steps` environment steps. With `resume`, the
/// learner continues from the checkpoint (parameters, optimizer moments and
/// counters); replay starts empty and the random streams are re-derived
/// from the seed and the resume step.
pub fn run_training_with(
    config: &RunConfig,
    seed: u64,
    out: &Path,
    resume: Option<&Path>,
    progress: &mut dyn FnMut(&EpisodeMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let echo = config.echo();
    let total = config.run.total_steps;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut learner = build_learner(config, &mut agent_rng)?;
    let mut step = 0;
    let mut episode = 0;
    let mut rows: Vec<EpisodeMetrics> = Vec::new();
    let mut trailing = TrailingMean::new(config.run.trailing_window);

    if let Some(path) = resume {
        let loaded = load_checkpoint(path)?;
        let h = &loaded.header;
        if h.config_echo != echo {
            return Err(Error::Config("checkpoint was written by a different configuration".into()));
        }
        if h.seed != seed {
            return Err(Error::Config(format!("checkpoint belongs to seed {}, not {seed}", h.seed)));
        }
        learner.restore(&loaded.checkpoint, h.counters)?;
        step = h.step;
        episode = h.episodes;
        let previous = metrics_path(out, seed);
        if previous.exists() {
            let file = crate::harness::metrics::read_metrics(File::open(&previous)?)?;
            rows = file.rows.into_iter().filter(|r| r.end_step <= step).collect();
            for r in &rows {
                trailing.push(r.reward);
            }
        }
        master = ChaCha8Rng::seed_from_u64(seed);
        master.set_stream(step);
        agent_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    }

    let mut env = HighwayEnv::new(config.env.clone(), config.safety_layer())?;
    let mut checkpoints = Vec::new();
    let mut run = Run {
        config,
        seed,
        out,
        echo: &echo,
    };
    if resume.is_none() {
        checkpoints.push(run.checkpoint(step, episode, &rows, learner.as_ref())?);
    }

    while step < total {
        let episode_seed = master.next_u64();
        let mut obs = env.reset(episode_seed)?;
        let mut reward = 0.0;
        let mut length = 0;
        let mut violations = 0;
        loop {
            let action = learner.act(&obs.features, true, &mut agent_rng);
            let result = env.step(action);
            step += 1;
            length += 1;
            reward += result.reward;
            violations += u64::from(result.info.safety_violation);
            let status = result.status;
            let record = StepRecord {
                observation: std::mem::take(&mut obs.features),
                action,
                reward: result.reward,
                next_observation: result.observation.features.clone(),
                status,
            };
            learner.observe(record, &mut agent_rng)?;
            obs = result.observation;

            if status.is_done() {
                let (solved, collided, truncated) = EpisodeMetrics::outcome_flags(status);
                let row = EpisodeMetrics {
                    episode,
                    episode_seed,
                    end_step: step,
                    reward,
                    length,
                    solved,
                    collided,
                    truncated,
                    lane_changes: result.info.lane_changes_so_far as u64,
                    safety_violations: violations,
                    trailing_reward: trailing.push(reward),
                };
                progress(&row);
                rows.push(row);
                episode += 1;
            }
            if step % config.run.checkpoint_every == 0 || step == total {
                checkpoints.push(run.checkpoint(step, episode, &rows, learner.as_ref())?);
            }
            if status.is_done() || step >= total {
                break;
            }
        }
    }

    let summary = run.write_metrics(&rows)?;
    Ok(TrainOutcome {
        metrics_path: metrics_path(out, seed),
        curve_path: curve_path(out, seed),
        checkpoints,
        rows,
        summary,
    })
}

struct Run<'a> {
    config: &'a RunConfig,
    seed: u64,
    out: &'a Path,
    echo: &'a str,
}

impl Run<'_> {
    fn curve(rows: &[EpisodeMetrics]) -> Vec<(u64, f64)> {
        rows.iter().map(|r| (r.end_step, r.trailing_reward)).collect()
    }

    fn write_metrics(&mut self, rows: &[EpisodeMetrics]) -> Result<Summary> {
        let summary = Summary::from_episodes(rows, settling_step(&Self::curve(rows)));
        let meta = [
            ("seed", self.seed.to_string()),
            ("benchmark", self.config.run.benchmark.as_str().to_string()),
            ("agent", self.config.run.agent.as_str().to_string()),
            ("total_steps", self.config.run.total_steps.to_string()),
            ("config", self.echo.to_string()),
        ];
        let mut out = BufWriter::new(File::create(metrics_path(self.out, self.seed))?);
        write_metrics(&mut out, METRICS_SCHEMA, &meta, rows, &summary)?;
        out.flush()?;

        let mut curve = BufWriter::new(File::create(curve_path(self.out, self.seed))?);
        writeln!(curve, "step,episode,trailing_reward")?;
        for r in rows {
            writeln!(curve, "{},{},{}", r.end_step, r.episode, r.trailing_reward)?;
        }
        curve.flush()?;
        Ok(summary)
    }

    fn checkpoint(&mut self, step: u64, episodes: u64, rows: &[EpisodeMetrics], learner: &dyn Learner) -> Result<PathBuf> {
        let summary = self.write_metrics(rows)?;
        let header = RunHeader {
            schema: RUN_SCHEMA.to_string(),
            config: self.config.clone(),
            config_echo: self.echo.to_string(),
            seed: self.seed,
            step,
            episodes,
            counters: learner.counters(),
            settling_step: summary.settling_step,
            trailing_reward: summary.trailing_reward,
        };
        let path = checkpoint_path(self.out, self.seed, step);
        save_checkpoint(&path, &header, learner)?;
        Ok(path)
    }
}
