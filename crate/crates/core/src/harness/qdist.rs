//! Offline dump of the value distributions a Rainbow checkpoint assigns
//! along a recorded episode.

use std::io::Write;

use serde::Serialize;

use crate::env::{Action, EpisodeTrace, HighwayEnv};
use crate::error::{Error, Result};
use crate::harness::checkpoint::LoadedCheckpoint;
use crate::harness::config::RunConfig;

pub const QDIST_SCHEMA: &str = "lanechange-qdist v1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QdistRow {
    pub t: u64,
    pub action: Action,
    pub atom: usize,
    pub z: f64,
    pub probability: f64,
    pub expected_value: f64,
}

/// Replays the trace's episode (its seed and requested actions, under the
/// configuration echoed in the trace) and evaluates the checkpoint's value
/// distribution at every decision. The replay must reproduce the recorded
/// ego positions exactly.
pub fn dump_qdist(checkpoint: &LoadedCheckpoint, trace: &EpisodeTrace) -> Result<Vec<QdistRow>> {
    let agent = checkpoint.rainbow()?;
    let scenario: RunConfig = serde_json::from_str(&trace.config_echo)
        .map_err(|e| Error::Trace(format!("config echo does not parse: {e}")))?;
    let own = &checkpoint.header.config.env;
    if scenario.env.observation != own.observation || scenario.env.observation_len() != own.observation_len() {
        return Err(Error::Config("trace and checkpoint use different observations".into()));
    }
    let mut env = HighwayEnv::new(scenario.env.clone(), scenario.safety_layer())?;
    let mut obs = env.reset(trace.episode_seed)?;
    let mut rows = Vec::new();
    for rec in &trace.rows {
        let q = agent.q_distribution(&obs.features);
        for (a, action) in Action::ALL.into_iter().enumerate() {
            for (j, (&z, &p)) in q.support.iter().zip(&q.probs[a]).enumerate() {
                rows.push(QdistRow {
                    t: rec.t,
                    action,
                    atom: j,
                    z,
                    probability: p,
                    expected_value: q.expected[a],
                });
            }
        }
        let result = env.step(rec.action_requested);
        let s = env.world().ego().state.s;
        if s != rec.ego_s {
            return Err(Error::Trace(format!(
                "replay diverged at t={}: ego_s {s} instead of {}",
                rec.t, rec.ego_s
            )));
        }
        if result.status.is_done() {
            break;
        }
        obs = result.observation;
    }
    Ok(rows)
}

pub fn write_qdist<W: Write>(mut out: W, trace: &EpisodeTrace, rows: &[QdistRow]) -> Result<()> {
    writeln!(out, "# schema: {QDIST_SCHEMA}")?;
    writeln!(out, "# episode_seed: {}", trace.episode_seed)?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
