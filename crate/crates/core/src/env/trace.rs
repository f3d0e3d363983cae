//! Episode trace CSV: one row per decision step.
//!
//! The file starts with `#` comment lines carrying the episode seed and a
//! config echo so the episode can be replayed.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{Action, StepResult, WorldState, EGO};
use crate::error::{Error, Result};

pub const TRACE_SCHEMA: &str = "lanechange-trace v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub ego_s: f64,
    pub ego_y: f64,
    pub ego_v: f64,
    pub action_requested: Action,
    pub action_executed: Action,
    pub reward: f64,
    pub status: String,
    pub safety_violation: bool,
}

impl TraceRow {
    pub fn from_step(t: u64, world: &WorldState, step: &StepResult) -> Self {
        let ego = &world.vehicles[EGO].state;
        Self {
            t,
            ego_s: ego.s,
            ego_y: ego.y,
            ego_v: ego.v,
            action_requested: step.info.requested_action,
            action_executed: step.info.executed_action,
            reward: step.reward,
            status: step.status.as_str().to_string(),
            safety_violation: step.info.safety_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub episode_seed: u64,
    /// Echo of the run configuration that produced the episode.
    pub config_echo: String,
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema: {TRACE_SCHEMA}")?;
        writeln!(out, "# episode_seed: {}", self.episode_seed)?;
        writeln!(out, "# config: {}", self.config_echo)?;
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut seed = None;
        let mut echo = None;
        let mut body = String::new();
        let mut line = String::new();
        while reader.read_line(&mut line)? > 0 {
            if let Some(rest) = line.strip_prefix("# episode_seed: ") {
                seed = Some(rest.trim().parse::<u64>().map_err(|e| Error::Trace(e.to_string()))?);
            } else if let Some(rest) = line.strip_prefix("# config: ") {
                echo = Some(rest.trim_end().to_string());
            } else if !line.starts_with('#') {
                body.push_str(&line);
            }
            line.clear();
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self {
            episode_seed: seed.ok_or_else(|| Error::Trace("missing episode_seed header".into()))?,
            config_echo: echo.ok_or_else(|| Error::Trace("missing config header".into()))?,
            rows,
        })
    }
}
