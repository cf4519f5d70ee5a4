use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mazeenv::{Outcome, Pose};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    pub cumulative_steps: u64,
    pub total_reward: f64,
    pub outcome: Outcome,
    pub trajectory: Vec<Pose>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub records: Vec<EpisodeRecord>,
}

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Running => "running",
        Outcome::Collision => "collision",
        Outcome::Arrival => "arrival",
        Outcome::Timeout => "timeout",
    }
}

pub fn parse_outcome(s: &str) -> Option<Outcome> {
    Some(match s {
        "running" => Outcome::Running,
        "collision" => Outcome::Collision,
        "arrival" => Outcome::Arrival,
        "timeout" => Outcome::Timeout,
        _ => return None,
    })
}

/// Means of consecutive non-overlapping `w`-episode blocks, attached to the last
/// episode of each block.
pub fn avg_reward_window(records: &[EpisodeRecord], w: usize) -> Vec<Option<f64>> {
    assert!(w >= 1, "window must be at least 1");
    let mut out = vec![None; records.len()];
    for (b, block) in records.chunks_exact(w).enumerate() {
        let mean = block.iter().map(|r| r.total_reward).sum::<f64>() / w as f64;
        out[(b + 1) * w - 1] = Some(mean);
    }
    out
}

/// Fraction of arrivals over the trailing `min(w, episodes so far)` episodes.
pub fn success_rate_window(records: &[EpisodeRecord], w: usize) -> Vec<f64> {
    assert!(w >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(records.len());
    let mut hits = 0usize;
    for (i, r) in records.iter().enumerate() {
        if r.outcome == Outcome::Arrival {
            hits += 1;
        }
        if i >= w && records[i - w].outcome == Outcome::Arrival {
            hits -= 1;
        }
        out.push(hits as f64 / (i + 1).min(w) as f64);
    }
    out
}

/// First episode index (0-based) whose full trailing window reaches `threshold`.
pub fn first_threshold_crossing(records: &[EpisodeRecord], w: usize, threshold: f64) -> Option<usize> {
    success_rate_window(records, w)
        .iter()
        .enumerate()
        .find(|&(i, &s)| i + 1 >= w && s >= threshold)
        .map(|(i, _)| i)
}

pub const CSV_HEADER: [&str; 7] = [
    "episode",
    "steps",
    "cumulative_steps",
    "total_reward",
    "outcome",
    "success_rate_100",
    "avg_reward_50",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    episode: usize,
    steps: usize,
    cumulative_steps: u64,
    total_reward: f64,
    outcome: String,
    success_rate_100: f64,
    avg_reward_50: Option<f64>,
}

impl MetricsSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: EpisodeRecord) {
        self.records.push(r);
    }

    pub fn success_rates(&self) -> Vec<f64> {
        success_rate_window(&self.records, 100)
    }

    pub fn avg_rewards(&self) -> Vec<Option<f64>> {
        avg_reward_window(&self.records, 50)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(CSV_HEADER)?;
        let sr = self.success_rates();
        let ar = self.avg_rewards();
        for (i, r) in self.records.iter().enumerate() {
            wr.serialize(CsvRow {
                episode: r.episode,
                steps: r.steps,
                cumulative_steps: r.cumulative_steps,
                total_reward: r.total_reward,
                outcome: outcome_name(r.outcome).to_string(),
                success_rate_100: sr[i],
                avg_reward_50: ar[i],
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a metrics CSV back; trajectories are not stored and come back empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, HarnessError> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(HarnessError::Format(format!("unexpected metrics header {headers:?}")));
        }
        let mut records = Vec::new();
        for row in rd.deserialize() {
            let row: CsvRow = row?;
            records.push(EpisodeRecord {
                episode: row.episode,
                steps: row.steps,
                cumulative_steps: row.cumulative_steps,
                total_reward: row.total_reward,
                outcome: parse_outcome(&row.outcome)
                    .ok_or_else(|| HarnessError::Format(format!("bad outcome {:?}", row.outcome)))?,
                trajectory: Vec::new(),
            });
        }
        Ok(Self { records })
    }

    pub fn load_csv(path: &Path) -> Result<Self, HarnessError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
