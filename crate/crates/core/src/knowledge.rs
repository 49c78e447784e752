//! Append-only JSON Lines knowledge base.
//!
//! Three streams live in one directory:
//!
//! * `episodes.jsonl`: one [`EpisodeRecord`] per (method, seed, episode)
//! * `provenance.jsonl`: [`ProvenanceRecord`] lines (per-episode coefficient
//!   provenance, learner deviations and table changes, advisor outcomes)
//! * `trajectories-NNNN.jsonl`: [`TrajectoryRecord`] segments of at most
//!   [`TRAJECTORY_SEGMENT`] lines; only the newest [`TRAJECTORY_CAP`] records
//!   are visible to readers
//!
//! Every line carries `"schema": "sagin-kb/1"`. Numbers are written in
//! shortest round-trip form, so loading gives back the exact bits.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Deviation, TableChange};
use crate::orchestrator::Provenance;

pub const SCHEMA_VERSION: &str = "sagin-kb/1";
pub const TRAJECTORY_CAP: usize = 200;
pub const TRAJECTORY_SEGMENT: usize = TRAJECTORY_CAP;

const EPISODES: &str = "episodes.jsonl";
const PROVENANCE: &str = "provenance.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub method: String,
    pub seed: u64,
    pub semantic_summary: String,
    pub lambda: f64,
    pub episode_reward: f64,
    pub mean_latency_ms: f64,
    pub total_uav_energy: f64,
    pub deadline_met: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub method: String,
    pub seed: u64,
    pub episode: usize,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub episode_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProvenanceRecord {
    Lambda {
        method: String,
        seed: u64,
        lambda: f64,
        provenance: Provenance,
    },
    Deviation {
        method: String,
        seed: u64,
        deviation: Deviation,
    },
    TableChange {
        method: String,
        seed: u64,
        episode: usize,
        change: TableChange,
    },
    Advisor {
        method: String,
        seed: u64,
        episode: usize,
        outcome: String,
    },
}

#[derive(Serialize)]
struct LineOut<'a, T> {
    schema: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Deserialize)]
struct LineIn<T> {
    schema: String,
    #[serde(flatten)]
    record: T,
}

/// Selects records by method, seed and inclusive episode range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub episodes: Option<RangeInclusive<usize>>,
}

impl Filter {
    pub fn method(mut self, method: impl Into<String>) -> Self {
        self.method = Some(method.into());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn episodes(mut self, range: RangeInclusive<usize>) -> Self {
        self.episodes = Some(range);
        self
    }

    fn accepts(&self, method: &str, seed: u64, episode: usize) -> bool {
        self.method.as_deref().map_or(true, |m| m == method)
            && self.seed.map_or(true, |s| s == seed)
            && self.episodes.as_ref().map_or(true, |r| r.contains(&episode))
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    dir: PathBuf,
}

fn check_finite(path: &Path, what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::MalformedRecord {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{what} contains a non-finite number"),
        })
    }
}

impl KnowledgeStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn append_line<T: Serialize>(&self, path: &Path, record: &T) -> Result<()> {
        let mut line = serde_json::to_string(&LineOut {
            schema: SCHEMA_VERSION,
            record,
        })?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
    }

    fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
        let f = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let parsed: LineIn<T> = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if parsed.schema != SCHEMA_VERSION {
                return Err(malformed(format!("unsupported schema `{}`", parsed.schema)));
            }
            out.push(parsed.record);
        }
        Ok(out)
    }

    pub fn append_episode(&self, record: &EpisodeRecord) -> Result<()> {
        let path = self.dir.join(EPISODES);
        check_finite(
            &path,
            "episode record",
            [
                record.lambda,
                record.episode_reward,
                record.mean_latency_ms,
                record.total_uav_energy,
            ],
        )?;
        self.append_line(&path, record)
    }

    pub fn load_episodes(&self, filter: &Filter) -> Result<Vec<EpisodeRecord>> {
        let all: Vec<EpisodeRecord> = Self::read_lines(&self.dir.join(EPISODES))?;
        Ok(all
            .into_iter()
            .filter(|r| filter.accepts(&r.method, r.seed, r.episode))
            .collect())
    }

    pub fn append_provenance(&self, record: &ProvenanceRecord) -> Result<()> {
        self.append_line(&self.dir.join(PROVENANCE), record)
    }

    pub fn load_provenance(&self) -> Result<Vec<ProvenanceRecord>> {
        Self::read_lines(&self.dir.join(PROVENANCE))
    }

    /// Table changes for one run, in append order.
    pub fn table_changes(&self, method: &str, seed: u64) -> Result<Vec<TableChange>> {
        Ok(self
            .load_provenance()?
            .into_iter()
            .filter_map(|r| match r {
                ProvenanceRecord::TableChange {
                    method: m,
                    seed: s,
                    change,
                    ..
                } if m == method && s == seed => Some(change),
                _ => None,
            })
            .collect())
    }

    fn segment_path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("trajectories-{index:04}.jsonl"))
    }

    fn segments(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        loop {
            let p = self.segment_path(out.len());
            if !p.exists() {
                return Ok(out);
            }
            out.push(p);
        }
    }

    fn count_lines(path: &Path) -> Result<usize> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(BufReader::new(f).lines().count())
    }

    pub fn append_trajectory(&self, record: &TrajectoryRecord) -> Result<()> {
        let segments = self.segments()?;
        let path = match segments.last() {
            Some(last) if Self::count_lines(last)? < TRAJECTORY_SEGMENT => last.clone(),
            _ => self.segment_path(segments.len()),
        };
        check_finite(
            &path,
            "trajectory",
            record
                .pairs
                .iter()
                .flat_map(|(o, a)| o.iter().chain(a.iter()).copied())
                .chain([record.episode_reward]),
        )?;
        self.append_line(&path, record)
    }

    /// The newest [`TRAJECTORY_CAP`] trajectories in append order.
    pub fn load_trajectories(&self) -> Result<Vec<TrajectoryRecord>> {
        let segments = self.segments()?;
        let start = segments.len().saturating_sub(2);
        let mut all = Vec::new();
        for p in &segments[start..] {
            all.extend(Self::read_lines::<TrajectoryRecord>(p)?);
        }
        let skip = all.len().saturating_sub(TRAJECTORY_CAP);
        Ok(all.split_off(skip))
    }

    pub fn top_trajectories(&self, k: usize) -> Result<Vec<TrajectoryRecord>> {
        self.top_trajectories_where(k, &Filter::default())
    }

    /// Highest episode reward first; ties keep append order.
    pub fn top_trajectories_where(&self, k: usize, filter: &Filter) -> Result<Vec<TrajectoryRecord>> {
        let mut v: Vec<TrajectoryRecord> = self
            .load_trajectories()?
            .into_iter()
            .filter(|t| filter.accepts(&t.method, t.seed, t.episode))
            .collect();
        v.sort_by(|a, b| b.episode_reward.total_cmp(&a.episode_reward));
        v.truncate(k);
        Ok(v)
    }
}
