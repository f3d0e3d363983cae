//! Per-episode metrics, the trailing reward curve, and the settling step.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::EpisodeStatus;
use crate::error::{Error, Result};

pub const METRICS_SCHEMA: &str = "lanechange-metrics v1";
pub const EVAL_SCHEMA: &str = "lanechange-eval v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub episode_seed: u64,
    /// Training step at which the episode ended (0 for evaluation).
    pub end_step: u64,
    pub reward: f64,
    pub length: u64,
    pub solved: bool,
    pub collided: bool,
    pub truncated: bool,
    pub lane_changes: u64,
    pub safety_violations: u64,
    /// Mean reward over the trailing window ending at this episode.
    pub trailing_reward: f64,
}

impl EpisodeMetrics {
    pub fn outcome_flags(status: EpisodeStatus) -> (bool, bool, bool) {
        (
            status == EpisodeStatus::Solved,
            status == EpisodeStatus::Collided,
            status == EpisodeStatus::Truncated,
        )
    }
}

/// Running mean of the most recent `window` values.
#[derive(Debug, Clone)]
pub struct TrailingMean {
    window: usize,
    values: VecDeque<f64>,
    sum: f64,
}

impl TrailingMean {
    pub fn new(window: usize) -> Self {
        assert!(window > 0);
        Self {
            window,
            values: VecDeque::with_capacity(window),
            sum: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        self.values.push_back(x);
        if self.values.len() > self.window {
            self.values.pop_front();
        }
        // Summed afresh so that rounding does not drift over long runs.
        self.sum = self.values.iter().sum();
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.sum / self.values.len() as f64
        }
    }
}

/// Aggregate over a set of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub solved_ratio: f64,
    pub collision_ratio: f64,
    pub truncation_ratio: f64,
    pub mean_reward: f64,
    pub mean_lane_changes: f64,
    pub mean_safety_violations: f64,
    /// Trailing-window mean at the last episode.
    pub trailing_reward: f64,
    pub settling_step: u64,
}

impl Summary {
    pub fn from_episodes(rows: &[EpisodeMetrics], settling_step: u64) -> Self {
        let n = rows.len().max(1) as f64;
        let frac = |f: fn(&EpisodeMetrics) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
        Self {
            episodes: rows.len(),
            solved_ratio: frac(|r| r.solved),
            collision_ratio: frac(|r| r.collided),
            truncation_ratio: frac(|r| r.truncated),
            mean_reward: rows.iter().map(|r| r.reward).sum::<f64>() / n,
            mean_lane_changes: rows.iter().map(|r| r.lane_changes as f64).sum::<f64>() / n,
            mean_safety_violations: rows.iter().map(|r| r.safety_violations as f64).sum::<f64>() / n,
            trailing_reward: rows.last().map_or(0.0, |r| r.trailing_reward),
            settling_step,
        }
    }
}

/// First training step from which the trailing reward stays at or above
/// 95% of its settled value (the mean of the final 10% of the curve). For
/// a negative settled value the band is 5% of its magnitude below it.
/// Constant and empty curves settle at step 0.
pub fn settling_step(curve: &[(u64, f64)]) -> u64 {
    let Some(first) = curve.first() else {
        return 0;
    };
    if curve.iter().all(|&(_, v)| v == first.1) {
        return 0;
    }
    let tail = (curve.len() / 10).max(1);
    let settled = curve[curve.len() - tail..].iter().map(|&(_, v)| v).sum::<f64>() / tail as f64;
    let threshold = settled - 0.05 * settled.abs();
    let mut start = curve.len();
    for (i, &(_, v)) in curve.iter().enumerate().rev() {
        if v < threshold {
            break;
        }
        start = i;
    }
    curve.get(start).map_or(curve[curve.len() - 1].0, |&(s, _)| s)
}

fn write_header<W: Write>(out: &mut W, schema: &str, meta: &[(&str, String)]) -> Result<()> {
    writeln!(out, "# schema: {schema}")?;
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

/// Writes episode rows followed by a `# summary:` JSON footer.
pub fn write_metrics<W: Write>(
    mut out: W,
    schema: &str,
    meta: &[(&str, String)],
    rows: &[EpisodeMetrics],
    summary: &Summary,
) -> Result<()> {
    write_header(&mut out, schema, meta)?;
    {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(&mut out);
        if rows.is_empty() {
            w.write_record([
                "episode",
                "episode_seed",
                "end_step",
                "reward",
                "length",
                "solved",
                "collided",
                "truncated",
                "lane_changes",
                "safety_violations",
                "trailing_reward",
            ])?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    writeln!(out, "# summary: {}", serde_json::to_string(summary)?)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<EpisodeMetrics>,
    pub summary: Summary,
}

impl MetricsFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn read_metrics<R: Read>(input: R) -> Result<MetricsFile> {
    let mut reader = BufReader::new(input);
    let mut meta = Vec::new();
    let mut summary = None;
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        if let Some(rest) = line.strip_prefix("# summary: ") {
            summary = Some(serde_json::from_str(rest.trim())?);
        } else if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.trim_end().split_once(": ") {
                meta.push((k.to_string(), v.to_string()));
            }
        } else {
            body.push_str(&line);
        }
        line.clear();
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<EpisodeMetrics>, _>>()?;
    Ok(MetricsFile {
        meta,
        rows,
        summary: summary.ok_or_else(|| Error::Config("metrics file has no summary footer".into()))?,
    })
}
