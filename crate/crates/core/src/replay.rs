//! Rebuilds an episode from its trace and re-applies the recorded actions.
//!
//! Scripted shoppers are re-run from their config. Other backends are
//! stood in for by the recorded shopper turns.

use std::collections::VecDeque;

use crate::catalog::CatalogError;
use crate::env::{EnvError, Environment, Session, SessionSpec};
use crate::reward::{score, PurchaseOutcome, RewardBreakdown};
use crate::shopper::{CandidateSummary, Confirmation, Shopper, ShopperError, ShopperSpec, ScriptedShopper, Turn};
use crate::tasks::{ScenarioConfig, TaskSet};
use crate::trace::{EpisodeTrace, EventKind};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("trace has no header")]
    MissingHeader,
    #[error("task {0} is not in the task set")]
    UnknownTask(String),
    #[error("catalog mismatch: trace was recorded on {recorded}, replaying on {current}")]
    CatalogMismatch { recorded: String, current: String },
    #[error("trace has no final event")]
    NotTerminal,
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub replayed: EpisodeTrace,
    /// Index among observation events of the first mismatch.
    pub first_divergence: Option<usize>,
    pub recorded_reward: Option<RewardBreakdown>,
    pub replayed_reward: Option<RewardBreakdown>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.first_divergence.is_none() && self.recorded_reward == self.replayed_reward
    }
}

/// Plays back recorded shopper turns.
struct RecordedShopper {
    spec: ShopperSpec,
    turns: VecDeque<(String, Option<bool>)>,
}

impl RecordedShopper {
    fn next(&mut self) -> String {
        self.turns.pop_front().map(|(t, _)| t).unwrap_or_default()
    }
}

impl Shopper for RecordedShopper {
    fn open(&mut self) -> Result<String, ShopperError> {
        Ok(self.next())
    }

    fn reply(&mut self, _: &[Turn], _: &str) -> Result<String, ShopperError> {
        Ok(self.next())
    }

    fn confirm_purchase(&mut self, _: &[Turn], _: &CandidateSummary) -> Result<Confirmation, ShopperError> {
        let (text, approved) = self.turns.pop_front().unwrap_or_default();
        Ok(if approved == Some(true) {
            Confirmation::Approve(text)
        } else {
            Confirmation::Refuse { slot: None, reason: text }
        })
    }

    fn spec(&self) -> ShopperSpec {
        self.spec.clone()
    }
}

pub fn replay(env: &Environment, tasks: &TaskSet, trace: &EpisodeTrace) -> Result<ReplayReport, ReplayError> {
    let header = trace.header().ok_or(ReplayError::MissingHeader)?;
    let current = &env.catalog().manifest().name;
    if &header.catalog != current {
        return Err(ReplayError::CatalogMismatch { recorded: header.catalog.clone(), current: current.clone() });
    }
    let task = tasks.get(&header.task_id).map_err(|_| ReplayError::UnknownTask(header.task_id.clone()))?;
    let mut config = ScenarioConfig::new(header.scenario);
    config.step_limit = header.step_limit;
    let mut spec = SessionSpec::new(task.clone(), config, header.seed);
    spec.profile = tasks.profile_for(task).ok().flatten().cloned();
    spec.session_id = header.session_id.clone();
    spec.policy = header.policy.clone();
    spec.shopper = header.shopper.as_ref().map(|s| -> Box<dyn Shopper> {
        match s {
            ShopperSpec::Scripted(cfg) => Box::new(ScriptedShopper::new(task, header.scenario, header.seed, cfg.clone())),
            other => Box::new(RecordedShopper {
                spec: other.clone(),
                turns: trace
                    .events
                    .iter()
                    .filter_map(|e| match &e.kind {
                        EventKind::Shopper { text, confirmation } => Some((text.clone(), *confirmation)),
                        _ => None,
                    })
                    .collect(),
            }),
        }
    });

    let (mut session, _) = Session::start(env.clone(), spec)?;
    for raw in trace.actions() {
        if session.is_terminal() {
            break;
        }
        match session.step(raw) {
            Ok(_) | Err(EnvError::AskInSingleTurn) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if !session.is_terminal() && trace.is_terminal() {
        let reason = trace.events.iter().rev().find_map(|e| match &e.kind {
            EventKind::Final { reason, .. } => reason.clone(),
            _ => None,
        });
        session.abort(reason.as_deref().unwrap_or("aborted"))?;
    }

    let replayed = session.trace();
    let observed = |t: &EpisodeTrace| -> Vec<EventKind> { t.observations().into_iter().map(|e| e.kind.clone()).collect() };
    let (a, b) = (observed(trace), observed(&replayed));
    let first_divergence = (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i));
    Ok(ReplayReport {
        recorded_reward: trace.reward().cloned(),
        replayed_reward: replayed.reward().cloned(),
        replayed,
        first_divergence,
    })
}

/// Scores the recorded purchase against the task, without re-running
/// the episode.
pub fn rescore(env: &Environment, tasks: &TaskSet, trace: &EpisodeTrace) -> Result<RewardBreakdown, ReplayError> {
    let header = trace.header().ok_or(ReplayError::MissingHeader)?;
    let task = tasks.get(&header.task_id).map_err(|_| ReplayError::UnknownTask(header.task_id.clone()))?;
    let (_, purchase, _) = trace.final_event().ok_or(ReplayError::NotTerminal)?;
    let outcome = match purchase {
        Some(p) => Some(PurchaseOutcome {
            product: env.catalog().get_product(&p.product_id)?.clone(),
            selected_options: p.selected_options.clone(),
            effective_price: p.effective_price,
            first_search_query: p.first_search_query.clone(),
        }),
        None => None,
    };
    Ok(score(&task.target, outcome.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_catalog, GenerationSpec};
    use crate::shopper::ScriptedConfig;
    use crate::tasks::{generate_tasks, Scenario, TaskGenConfig};

    fn run(scenario: Scenario, actions: &[&str]) -> (Environment, TaskSet, EpisodeTrace) {
        let catalog = generate_catalog(3, &GenerationSpec::new(1, 2, 2, 25)).unwrap();
        let fraction = if scenario.is_personalized() { 1.0 } else { 0.0 };
        let set = generate_tasks(&catalog, 3, 2, &TaskGenConfig { personalized_fraction: fraction, ..Default::default() })
            .unwrap();
        let env = Environment::new(catalog).unwrap();
        let task = set.tasks[0].clone();
        let mut spec = SessionSpec::new(task.clone(), ScenarioConfig::new(scenario), 11);
        spec.profile = set.profile_for(&task).unwrap().cloned();
        if scenario.is_multi_turn() {
            spec.shopper = Some(Box::new(ScriptedShopper::new(&task, scenario, 11, ScriptedConfig::default())));
        }
        let (mut s, _) = Session::start(env.clone(), spec).unwrap();
        let query = task.target.canonical_query.clone();
        s.step(&format!("search[{query}]")).unwrap();
        for a in actions {
            s.step(a).unwrap();
        }
        (env, set, s.trace())
    }

    #[test]
    fn replay_reproduces_single_turn() {
        let (env, set, trace) = run(Scenario::SingleTurn, &["click[next >]", "click[nope]"]);
        let report = replay(&env, &set, &trace).unwrap();
        assert!(report.matches(), "{report:?}");
        assert_eq!(report.replayed.to_jsonl(), trace.to_jsonl());
    }

    #[test]
    fn replay_reproduces_scripted_dialogue() {
        let ask = "Action_type: ask_shopper\nAction_content: What's your budget?";
        let (env, set, trace) = run(Scenario::MultiTurnPersonalized, &["click[back to search]", ask]);
        let report = replay(&env, &set, &trace).unwrap();
        assert!(report.matches());
        assert_eq!(report.replayed.to_jsonl(), trace.to_jsonl());
    }

    #[test]
    fn rescoring_matches_the_recorded_breakdown() {
        let (env, set, trace) = run(Scenario::SingleTurn, &[]);
        assert!(matches!(rescore(&env, &set, &trace), Err(ReplayError::NotTerminal)));
        let task = &set.tasks[0];
        let mut spec = SessionSpec::new(task.clone(), ScenarioConfig::new(Scenario::SingleTurn), 2);
        spec.profile = set.profile_for(task).unwrap().cloned();
        let (mut s, _) = Session::start(env.clone(), spec).unwrap();
        s.step(&format!("search[{}]", task.target.canonical_query)).unwrap();
        let first = s.render().clickable.into_iter().find(|c| c.chars().all(|ch| ch.is_ascii_digit())).unwrap();
        s.step(&format!("click[{first}]")).unwrap();
        s.step("click[buy now]").unwrap();
        let trace = s.trace();
        assert_eq!(Some(&rescore(&env, &set, &trace).unwrap()), trace.reward());
    }

    #[test]
    fn tampered_trace_diverges() {
        let (env, set, mut trace) = run(Scenario::SingleTurn, &[]);
        for e in trace.events.iter_mut() {
            if let EventKind::Observation { text, .. } = &mut e.kind {
                text.push('!');
            }
        }
        assert_eq!(replay(&env, &set, &trace).unwrap().first_divergence, Some(0));
    }
}
