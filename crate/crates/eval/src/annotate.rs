//! Error annotation against the fixed error taxonomy.
//!
//! Mechanical codes come from rule detectors over trace events; judgment
//! codes need a [`Classifier`], typically chat-model backed.

use serde::{Deserialize, Serialize};
use shopsim_core::chat::{ChatClient, ChatMessage};
use shopsim_core::env::ActionKind;
use shopsim_core::generate::Vocabulary;
use shopsim_core::reward::similarity;
use shopsim_core::shopper::audit::{audit_transcript, ShopperIssue};
use shopsim_core::shopper::Turn;
use shopsim_core::tasks::{Task, TaskSet};
use shopsim_core::text;
use shopsim_core::trace::{EpisodeTrace, EventKind, Termination};

use crate::sft::trace_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    Search,
    Click,
    BuyNow,
    AskShopper,
    Personalization,
    Shopper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    IgnoredKeyAttribute,
    AbandonedHighMatchResult,
    RepeatedSimilarQuery,
    SearchOther,
    ViolatedHardRequirement,
    UnconfirmedKeyAttribute,
    NonexistentButton,
    RetriedRejectedAttribute,
    ClickOther,
    NoDetailConfirmation,
    PurchaseAfterRejection,
    BuyOther,
    DoNotAskWhenInfoMissing,
    OverConfirmedKnownInfo,
    AskedAfterFarewell,
    AskOther,
    IgnorePersonalInfo,
    OverinterpretPersonalInfo,
    MixShortAndLongTermPriorities,
    AddingExtraIntent,
    DistortingTargetIntent,
    SilentOnKeyGoal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 22] = [
        ErrorCode::IgnoredKeyAttribute,
        ErrorCode::AbandonedHighMatchResult,
        ErrorCode::RepeatedSimilarQuery,
        ErrorCode::SearchOther,
        ErrorCode::ViolatedHardRequirement,
        ErrorCode::UnconfirmedKeyAttribute,
        ErrorCode::NonexistentButton,
        ErrorCode::RetriedRejectedAttribute,
        ErrorCode::ClickOther,
        ErrorCode::NoDetailConfirmation,
        ErrorCode::PurchaseAfterRejection,
        ErrorCode::BuyOther,
        ErrorCode::DoNotAskWhenInfoMissing,
        ErrorCode::OverConfirmedKnownInfo,
        ErrorCode::AskedAfterFarewell,
        ErrorCode::AskOther,
        ErrorCode::IgnorePersonalInfo,
        ErrorCode::OverinterpretPersonalInfo,
        ErrorCode::MixShortAndLongTermPriorities,
        ErrorCode::AddingExtraIntent,
        ErrorCode::DistortingTargetIntent,
        ErrorCode::SilentOnKeyGoal,
    ];

    /// Codes the rule detectors can assign.
    pub const MECHANICAL: [ErrorCode; 7] = [
        ErrorCode::RepeatedSimilarQuery,
        ErrorCode::NonexistentButton,
        ErrorCode::AskedAfterFarewell,
        ErrorCode::PurchaseAfterRejection,
        ErrorCode::AddingExtraIntent,
        ErrorCode::DistortingTargetIntent,
        ErrorCode::SilentOnKeyGoal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorCode::IgnoredKeyAttribute => "Ignored key attribute",
            ErrorCode::AbandonedHighMatchResult => "Abandoned high-match result",
            ErrorCode::RepeatedSimilarQuery => "Repeated similar query",
            ErrorCode::ViolatedHardRequirement => "Violated hard requirement",
            ErrorCode::UnconfirmedKeyAttribute => "Unconfirmed key attribute",
            ErrorCode::NonexistentButton => "Nonexistent button",
            ErrorCode::RetriedRejectedAttribute => "Retried rejected attribute",
            ErrorCode::NoDetailConfirmation => "No detail confirmation",
            ErrorCode::PurchaseAfterRejection => "Purchase after rejection",
            ErrorCode::DoNotAskWhenInfoMissing => "Do not ask when info missing",
            ErrorCode::OverConfirmedKnownInfo => "Over-confirmed known info",
            ErrorCode::AskedAfterFarewell => "Asked after farewell",
            ErrorCode::IgnorePersonalInfo => "Ignore personal info",
            ErrorCode::OverinterpretPersonalInfo => "Overinterpret personal info",
            ErrorCode::MixShortAndLongTermPriorities => "Mix short- and long-term priorities",
            ErrorCode::AddingExtraIntent => "Adding extra intent",
            ErrorCode::DistortingTargetIntent => "Distorting target intent",
            ErrorCode::SilentOnKeyGoal => "Silent on key goal",
            ErrorCode::SearchOther | ErrorCode::ClickOther | ErrorCode::BuyOther | ErrorCode::AskOther => "Others",
        }
    }

    pub fn family(self) -> ErrorFamily {
        use ErrorCode::*;
        match self {
            IgnoredKeyAttribute | AbandonedHighMatchResult | RepeatedSimilarQuery | SearchOther => ErrorFamily::Search,
            ViolatedHardRequirement | UnconfirmedKeyAttribute | NonexistentButton | RetriedRejectedAttribute
            | ClickOther => ErrorFamily::Click,
            NoDetailConfirmation | PurchaseAfterRejection | BuyOther => ErrorFamily::BuyNow,
            DoNotAskWhenInfoMissing | OverConfirmedKnownInfo | AskedAfterFarewell | AskOther => ErrorFamily::AskShopper,
            IgnorePersonalInfo | OverinterpretPersonalInfo | MixShortAndLongTermPriorities => {
                ErrorFamily::Personalization
            }
            AddingExtraIntent | DistortingTargetIntent | SilentOnKeyGoal => ErrorFamily::Shopper,
        }
    }

    /// Looks a code up by its label, with "Others" resolved by family.
    pub fn from_label(label: &str, family: Option<ErrorFamily>) -> Option<Self> {
        let wanted = text::normalize(label);
        Self::ALL
            .into_iter()
            .filter(|c| family.is_none_or(|f| c.family() == f))
            .find(|c| text::normalize(c.label()) == wanted || text::normalize(&format!("{c:?}")) == wanted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    pub trace_id: String,
    pub code: ErrorCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub annotator: String,
    pub rationale: String,
}

pub const RULE_ANNOTATOR: &str = "rules";

/// Queries at least this similar count as repeats.
pub const REPEAT_SIMILARITY: f64 = 0.9;

const FAREWELL_MARKERS: &[&str] = &["goodbye", "bye", "farewell", "再见"];

fn is_farewell(utterance: &str) -> bool {
    let tokens = text::basic_tokens(utterance);
    FAREWELL_MARKERS.iter().any(|m| tokens.iter().any(|t| t == m) || (!m.is_ascii() && utterance.contains(m)))
}

fn note(trace: &EpisodeTrace, code: ErrorCode, step: usize, rationale: String) -> ErrorAnnotation {
    ErrorAnnotation { trace_id: trace_id(trace), code, step: Some(step), annotator: RULE_ANNOTATOR.into(), rationale }
}

/// Dialogue as recorded: shopper events and agent questions in order.
pub fn dialogue_of(trace: &EpisodeTrace) -> Vec<Turn> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Shopper { text, .. } => Some(Turn::shopper(text.clone())),
            EventKind::Action { parsed: Some(ActionKind::AskShopper(m)), .. } => Some(Turn::agent(m.clone())),
            _ => None,
        })
        .collect()
}

/// Mechanical detectors. Shopper-side codes need the task.
pub fn rule_annotations(trace: &EpisodeTrace, task: Option<&Task>, vocab: &Vocabulary) -> Vec<ErrorAnnotation> {
    let mut out = Vec::new();
    let mut last_query: Option<String> = None;
    let mut last_kind: Option<(usize, ActionKind)> = None;
    let mut farewell_at: Option<usize> = None;
    let mut refused_at: Option<usize> = None;
    for e in &trace.events {
        match &e.kind {
            EventKind::Action { parsed, .. } => {
                match parsed {
                    Some(ActionKind::Search(q)) => {
                        if let Some(prev) = &last_query {
                            if similarity(prev, q) >= REPEAT_SIMILARITY {
                                out.push(note(
                                    trace,
                                    ErrorCode::RepeatedSimilarQuery,
                                    e.step,
                                    format!("search {q:?} repeats {prev:?} with nothing learned in between"),
                                ));
                            }
                        }
                        last_query = Some(q.clone());
                    }
                    Some(ActionKind::AskShopper(m)) => {
                        if let Some(at) = farewell_at {
                            out.push(note(
                                trace,
                                ErrorCode::AskedAfterFarewell,
                                e.step,
                                format!("asked {m:?} after the shopper said goodbye at step {at}"),
                            ));
                        }
                    }
                    _ => {}
                }
                last_kind = parsed.clone().map(|k| (e.step, k));
            }
            EventKind::Shopper { text, confirmation } => {
                last_query = None;
                if is_farewell(text) && farewell_at.is_none() {
                    farewell_at = Some(e.step);
                }
                match confirmation {
                    Some(false) => refused_at = Some(e.step),
                    Some(true) => refused_at = None,
                    None => {}
                }
            }
            EventKind::Error { fatal: false, message } => {
                if let Some((step, ActionKind::Click(v))) = &last_kind {
                    if *step == e.step {
                        out.push(note(trace, ErrorCode::NonexistentButton, e.step, format!("click[{v}] rejected: {message}")));
                    }
                }
            }
            EventKind::Final { termination: Termination::Purchased, .. } => {
                if let Some(at) = refused_at {
                    out.push(note(
                        trace,
                        ErrorCode::PurchaseAfterRejection,
                        e.step,
                        format!("bought after the shopper refused at step {at}"),
                    ));
                }
            }
            _ => {}
        }
    }
    if let Some(task) = task {
        let dialogue = dialogue_of(trace);
        for finding in audit_transcript(task, vocab, &dialogue) {
            let code = match finding.issue {
                ShopperIssue::AddingExtraIntent => ErrorCode::AddingExtraIntent,
                ShopperIssue::DistortingTargetIntent => ErrorCode::DistortingTargetIntent,
                ShopperIssue::SilentOnKeyGoal => ErrorCode::SilentOnKeyGoal,
            };
            out.push(ErrorAnnotation {
                trace_id: trace_id(trace),
                code,
                step: None,
                annotator: RULE_ANNOTATOR.into(),
                rationale: format!("dialogue turn {}: {}", finding.turn, finding.detail),
            });
        }
    }
    out
}

/// Pluggable judgment classifier.
pub trait Classifier: Sync {
    fn id(&self) -> String;

    fn classify(&self, trace: &EpisodeTrace, task: Option<&Task>) -> Result<Vec<ErrorAnnotation>, String>;
}

/// Chat-model classifier. Replies are lines of `label | step | reason`.
pub struct LlmClassifier {
    pub client: ChatClient,
}

fn transcript(trace: &EpisodeTrace) -> String {
    let mut out = String::new();
    for e in &trace.events {
        let line = match &e.kind {
            EventKind::Observation { text, .. } => format!("[{}] observation: {}", e.step, text),
            EventKind::Action { raw, .. } => format!("[{}] agent: {}", e.step, raw.replace('\n', " / ")),
            EventKind::Shopper { text, .. } => format!("[{}] shopper: {}", e.step, text),
            EventKind::Error { message, .. } => format!("[{}] error: {}", e.step, message),
            EventKind::Final { termination, reward, .. } => {
                format!("[{}] end: {termination:?}, r_succ={}", e.step, reward.r_succ)
            }
            EventKind::Header(_) => continue,
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn family_name(f: ErrorFamily) -> &'static str {
    match f {
        ErrorFamily::Search => "Search",
        ErrorFamily::Click => "Click",
        ErrorFamily::BuyNow => "Buy Now",
        ErrorFamily::AskShopper => "Ask Shopper",
        ErrorFamily::Personalization => "Personalization",
        ErrorFamily::Shopper => "Shopper",
    }
}

pub fn parse_classifier_reply(reply: &str, trace: &EpisodeTrace, annotator: &str) -> Vec<ErrorAnnotation> {
    let families = [
        ErrorFamily::Search,
        ErrorFamily::Click,
        ErrorFamily::BuyNow,
        ErrorFamily::AskShopper,
        ErrorFamily::Personalization,
        ErrorFamily::Shopper,
    ];
    reply
        .lines()
        .filter_map(|line| {
            let mut parts = line.split('|').map(str::trim);
            let label = parts.next()?.trim_start_matches(['-', '*', ' ']);
            let (family, label) = match label.split_once('/') {
                Some((f, l)) => (families.into_iter().find(|x| text::normalize(family_name(*x)) == text::normalize(f)), l),
                None => (None, label),
            };
            let code = ErrorCode::from_label(label, family)?;
            let step = parts.next().and_then(|s| s.parse().ok());
            let rationale = parts.collect::<Vec<_>>().join(" | ");
            Some(ErrorAnnotation { trace_id: trace_id(trace), code, step, annotator: annotator.to_string(), rationale })
        })
        .collect()
}

impl Classifier for LlmClassifier {
    fn id(&self) -> String {
        format!("llm:{}", self.client.model())
    }

    fn classify(&self, trace: &EpisodeTrace, _task: Option<&Task>) -> Result<Vec<ErrorAnnotation>, String> {
        let mut types = String::new();
        for c in ErrorCode::ALL {
            types.push_str(&format!("- {}/{}\n", family_name(c.family()), c.label()));
        }
        let system = format!(
            "You review trajectories of a shopping agent and its shopper. Label every error you find with one of these types:\n{types}\nReply with one line per error in the form `Family/Type | step | reason`, or `NONE`."
        );
        let reply = self
            .client
            .complete(&[ChatMessage::system(system), ChatMessage::user(transcript(trace))])
            .map_err(|e| e.to_string())?;
        Ok(parse_classifier_reply(&reply.content, trace, &self.id()))
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AnnotationReport {
    pub annotations: Vec<ErrorAnnotation>,
    pub traces: usize,
    /// Codes that could have been assigned in this run.
    pub covered: Vec<ErrorCode>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classifier_errors: Vec<String>,
}

pub fn annotate_errors(
    traces: &[EpisodeTrace],
    tasks: Option<&TaskSet>,
    vocab: &Vocabulary,
    classifier: Option<&dyn Classifier>,
) -> AnnotationReport {
    let mut report = AnnotationReport { traces: traces.len(), ..Default::default() };
    let mut classifier_ok = classifier.is_some();
    for trace in traces {
        let task = tasks.zip(trace.header()).and_then(|(set, h)| set.get(&h.task_id).ok());
        report.annotations.extend(rule_annotations(trace, task, vocab));
        if let Some(c) = classifier {
            match c.classify(trace, task) {
                Ok(found) => report.annotations.extend(found),
                Err(e) => {
                    classifier_ok = false;
                    report.classifier_errors.push(format!("{}: {e}", trace_id(trace)));
                }
            }
        }
    }
    report.covered = if classifier_ok { ErrorCode::ALL.to_vec() } else { ErrorCode::MECHANICAL.to_vec() };
    if tasks.is_none() && !classifier_ok {
        report.covered.retain(|c| c.family() != ErrorFamily::Shopper);
    }
    report
}
