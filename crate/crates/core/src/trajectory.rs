//! Run trajectories: a JSON-lines file with a schema header followed by one
//! line per loop iteration.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;
use crate::io::{ExecReport, LoggedEvent};
use crate::pipeline::{ReflectionOutcome, TaskChange, TaskSpec};
use crate::skill::SkillCall;

pub const SCHEMA: &str = "trajectory/1";

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    Infeasible,
    MaxSteps,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GatheredSummary {
    pub keyframe_texts: Vec<String>,
    pub description: String,
    pub marks: usize,
    pub frame_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

/// One toolbar item visited during exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploredItem {
    pub level: u8,
    pub rect: Rect,
    pub tooltip: String,
    pub available: bool,
    pub skill: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub tick_start: u64,
    pub tick_end: u64,
    pub frames: Vec<u64>,
    pub gathered: GatheredSummary,
    pub reflection: ReflectionOutcome,
    pub task: Option<TaskSpec>,
    pub task_changes: Vec<TaskChange>,
    pub new_skills: Vec<String>,
    pub rejected_skills: Vec<String>,
    pub retrieved: Vec<String>,
    pub reasoning: String,
    pub action: Vec<SkillCall>,
    pub exec: Vec<ExecReport>,
    pub errors: Vec<StageError>,
    /// Things the loop did on its own, such as releasing a conflicting hold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Toolbar exploration done before this iteration; only on the first line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explored: Vec<ExploredItem>,
    pub provider_calls: BTreeMap<String, u32>,
    pub stage_ticks: BTreeMap<String, u64>,
    /// Everything the environment received during this iteration, including
    /// clock syncs, in order.
    pub events: Vec<LoggedEvent>,
    /// Digest of the screen after this iteration's events.
    pub render_digest: String,
    pub goal_reached: bool,
    pub terminated: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub steps_used: u32,
    pub success: bool,
    pub reason: Option<Termination>,
    pub trajectory: Option<PathBuf>,
    pub stage_ticks: BTreeMap<String, u64>,
    pub provider_calls: BTreeMap<String, u32>,
}

impl RunResult {
    pub fn from_records(records: &[IterationRecord], trajectory: Option<PathBuf>) -> Self {
        let mut stage_ticks = BTreeMap::new();
        let mut provider_calls = BTreeMap::new();
        for r in records {
            for (k, v) in &r.stage_ticks {
                *stage_ticks.entry(k.clone()).or_insert(0) += v;
            }
            for (k, v) in &r.provider_calls {
                *provider_calls.entry(k.clone()).or_insert(0) += v;
            }
        }
        let last = records.last();
        RunResult {
            steps_used: records.len() as u32,
            success: last.is_some_and(|r| r.goal_reached),
            reason: last.and_then(|r| r.terminated),
            trajectory,
            stage_ticks,
            provider_calls,
        }
    }
}

pub fn header_line() -> String {
    serde_json::json!({ "schema": SCHEMA }).to_string()
}

/// Appends records to a trajectory file, flushing after each line.
pub struct TrajectoryWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self, TrajectoryError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header_line())?;
        out.flush()?;
        Ok(Self { out, path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &IterationRecord) -> Result<(), TrajectoryError> {
        let line = serde_json::to_string(record).map_err(|e| TrajectoryError::Parse { line: 0, message: e.to_string() })?;
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn parse_trajectory(text: &str) -> Result<Vec<IterationRecord>, TrajectoryError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| TrajectoryError::Parse { line, message };
    let Some((_, header)) = lines.next() else {
        return Err(bad(1, "empty trajectory".into()));
    };
    let h: serde_json::Value = serde_json::from_str(header).map_err(|e| bad(1, e.to_string()))?;
    if h.get("schema").and_then(|s| s.as_str()) != Some(SCHEMA) {
        return Err(bad(1, format!("expected schema {SCHEMA}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rec: IterationRecord = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        if out.last().is_some_and(|p: &IterationRecord| rec.iteration <= p.iteration) {
            return Err(bad(i + 1, "iterations out of order".into()));
        }
        out.push(rec);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(bad(text.lines().count(), "truncated final line".into()));
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<IterationRecord>, TrajectoryError> {
    parse_trajectory(&std::fs::read_to_string(path)?)
}

/// Steps, success flag and per-stage totals of a recorded run.
pub fn summarize_run(path: &Path) -> Result<RunResult, TrajectoryError> {
    let records = read_trajectory(path)?;
    Ok(RunResult::from_records(&records, Some(path.to_path_buf())))
}
