//! Episode traces: one JSON event per line, appended and flushed as the
//! episode runs so a file on disk is always a valid prefix.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::reward::RewardBreakdown;
use crate::shopper::ShopperSpec;
use crate::tasks::Scenario;

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub engine_version: String,
    pub session_id: Option<String>,
    pub task_id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub step_limit: usize,
    pub catalog: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shopper: Option<ShopperSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseRecord {
    pub product_id: String,
    pub selected_options: IndexMap<String, String>,
    pub effective_price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_search_query: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Purchased,
    StepLimit,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Header(TraceHeader),
    Observation {
        text: String,
        search_available: bool,
        clickable: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shopper_utterance: Option<String>,
    },
    Action {
        raw: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parsed: Option<crate::env::ActionKind>,
    },
    Shopper {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        confirmation: Option<bool>,
    },
    Error {
        message: String,
        fatal: bool,
    },
    Final {
        termination: Termination,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        purchase: Option<PurchaseRecord>,
        reward: RewardBreakdown,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub step: usize,
    pub ts: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Source of event timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

/// Fixed epoch plus one second per reading; keeps traces byte-identical
/// across runs.
#[derive(Debug, Default)]
pub struct LogicalClock {
    ticks: AtomicU64,
}

impl Clock for LogicalClock {
    fn now(&self) -> String {
        let t = self.ticks.fetch_add(1, Ordering::SeqCst) as i64;
        chrono::DateTime::from_timestamp(t, 0)
            .expect("in range")
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace has no header")]
    MissingHeader,
}

/// Collects events in memory and optionally appends each one to a file.
pub struct TraceRecorder {
    events: Vec<TraceEvent>,
    clock: Box<dyn Clock>,
    sink: Option<(PathBuf, File)>,
}

impl TraceRecorder {
    pub fn in_memory(clock: Box<dyn Clock>) -> Self {
        Self { events: Vec::new(), clock, sink: None }
    }

    pub fn logical() -> Self {
        Self::in_memory(Box::new(LogicalClock::default()))
    }

    pub fn to_file(path: &Path, clock: Box<dyn Clock>) -> Result<Self, TraceError> {
        let io = |source| TraceError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).truncate(true).write(true).open(path).map_err(io)?;
        Ok(Self { events: Vec::new(), clock, sink: Some((path.to_path_buf(), file)) })
    }

    pub fn record(&mut self, step: usize, kind: EventKind) -> Result<(), TraceError> {
        let event = TraceEvent { seq: self.events.len() as u64, step, ts: self.clock.now(), kind };
        if let Some((path, file)) = &mut self.sink {
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| TraceError::Io { path: path.clone(), source })?;
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn trace(&self) -> EpisodeTrace {
        EpisodeTrace { events: self.events.clone() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub events: Vec<TraceEvent>,
}

impl EpisodeTrace {
    pub fn header(&self) -> Option<&TraceHeader> {
        self.events.iter().find_map(|e| match &e.kind {
            EventKind::Header(h) => Some(h),
            _ => None,
        })
    }

    pub fn final_event(&self) -> Option<(Termination, Option<&PurchaseRecord>, &RewardBreakdown)> {
        self.events.iter().find_map(|e| match &e.kind {
            EventKind::Final { termination, purchase, reward, .. } => Some((*termination, purchase.as_ref(), reward)),
            _ => None,
        })
    }

    pub fn reward(&self) -> Option<&RewardBreakdown> {
        self.final_event().map(|(_, _, r)| r)
    }

    pub fn is_terminal(&self) -> bool {
        self.final_event().is_some()
    }

    /// Agent actions in order, raw text.
    pub fn actions(&self) -> Vec<&str> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Action { raw, .. } => Some(raw.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn observations(&self) -> Vec<&TraceEvent> {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Observation { .. })).collect()
    }

    /// Number of agent actions, dialogue included.
    pub fn step_count(&self) -> usize {
        self.actions().len()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(contents: &str) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TraceEvent = serde_json::from_str(line)
                .map_err(|err| TraceError::Malformed { line: i + 1, message: err.to_string() })?;
            events.push(e);
        }
        let trace = Self { events };
        trace.header().ok_or(TraceError::MissingHeader)?;
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let io = |source| TraceError::Io { path: path.to_path_buf(), source };
        let mut contents = String::new();
        for line in BufReader::new(File::open(path).map_err(io)?).lines() {
            contents.push_str(&line.map_err(io)?);
            contents.push('\n');
        }
        Self::parse(&contents)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let io = |source| TraceError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(path, self.to_jsonl()).map_err(io)
    }
}

/// Reads every `*.jsonl` trace under a directory, recursively, sorted by
/// path.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, EpisodeTrace)>, TraceError> {
    let mut paths = Vec::new();
    collect_jsonl(dir, &mut paths)?;
    paths.sort();
    paths.into_iter().map(|p| EpisodeTrace::load(&p).map(|t| (p, t))).collect()
}

fn collect_jsonl(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), TraceError> {
    let io = |source| TraceError::Io { path: dir.to_path_buf(), source };
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_jsonl(&path, out)?;
        } else if path.extension().is_some_and(|x| x == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}
