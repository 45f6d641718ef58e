//! Per-step supervised examples from successful traces.
//!
//! Each line of the output is one [`SftRecord`]: the chat context up to a
//! step (system prompt, then alternating observation and action turns) and
//! the action taken at that step. Shopper replies appear inside the
//! observation turn that follows the question.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shopsim_core::chat::ChatMessage;
use shopsim_core::env::Observation;
use shopsim_core::prompts::AGENT_SYSTEM;
use shopsim_core::tasks::Scenario;
use shopsim_core::trace::{EpisodeTrace, EventKind};

use crate::harness::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "threshold", rename_all = "snake_case")]
pub enum SftFilter {
    /// `r_succ == 1`.
    Success,
    /// `r_strict >= threshold`.
    StrictAtLeast(f64),
}

impl SftFilter {
    pub fn accepts(&self, trace: &EpisodeTrace) -> bool {
        match (self, trace.reward()) {
            (_, None) => false,
            (SftFilter::Success, Some(r)) => r.r_succ == 1.0,
            (SftFilter::StrictAtLeast(t), Some(r)) => r.r_strict >= *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub trace_id: String,
    pub task_id: String,
    pub scenario: Scenario,
    pub step: usize,
    pub messages: Vec<ChatMessage>,
    pub action: String,
}

#[derive(Debug, Clone, Default)]
pub struct SftDataset {
    pub records: Vec<SftRecord>,
    pub traces_used: Vec<String>,
    pub traces_seen: usize,
}

impl SftDataset {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        crate::write_file(path, &self.to_jsonl())
    }
}

pub fn trace_id(trace: &EpisodeTrace) -> String {
    match trace.header() {
        Some(h) => format!("{}:{}:{}", h.task_id, h.scenario, h.seed),
        None => "unknown".into(),
    }
}

fn records_of(trace: &EpisodeTrace) -> Vec<SftRecord> {
    let Some(header) = trace.header() else { return Vec::new() };
    let id = trace_id(trace);
    let mut messages = vec![ChatMessage::system(AGENT_SYSTEM)];
    let mut out = Vec::new();
    for event in &trace.events {
        match &event.kind {
            EventKind::Observation { text, search_available, clickable, shopper_utterance } => {
                let obs = Observation {
                    text: text.clone(),
                    search_available: *search_available,
                    clickable: clickable.clone(),
                    shopper_utterance: shopper_utterance.clone(),
                };
                messages.push(ChatMessage::user(obs.display()));
            }
            EventKind::Action { raw, .. } => {
                out.push(SftRecord {
                    trace_id: id.clone(),
                    task_id: header.task_id.clone(),
                    scenario: header.scenario,
                    step: event.step,
                    messages: messages.clone(),
                    action: raw.clone(),
                });
                messages.push(ChatMessage::assistant(raw.clone()));
            }
            _ => {}
        }
    }
    out
}

pub fn export_sft(traces: &[EpisodeTrace], filter: SftFilter) -> SftDataset {
    let mut data = SftDataset { traces_seen: traces.len(), ..Default::default() };
    for t in traces.iter().filter(|t| filter.accepts(t)) {
        data.traces_used.push(trace_id(t));
        data.records.extend(records_of(t));
    }
    if data.records.is_empty() {
        tracing::warn!(traces = traces.len(), "no trace passed the SFT filter; output is empty");
    }
    data
}
