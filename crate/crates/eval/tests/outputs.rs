mod common;

use std::collections::HashSet;

use shopsim_core::reward::RewardSelector;
use shopsim_core::tasks::{Scenario, Task};
use shopsim_core::trace::EpisodeTrace;
use shopsim_eval::annotate::{rule_annotations, ErrorCode};
use shopsim_eval::policy::{
    EpisodeInfo, NoisyOracleFactory, OracleFactory, OraclePolicy, Policy, PolicyContext, PolicyError, PolicyFactory,
    RandomFactory,
};
use shopsim_eval::rollouts::{collect_rollouts, mean_std};
use shopsim_eval::{export_sft, run_episode, EvalError, RunOptions, SftFilter};

/// Plays a fixed list of actions, then gives up.
struct Script(Vec<String>);

struct ScriptPolicy(std::vec::IntoIter<String>);

impl Policy for ScriptPolicy {
    fn act(&mut self, _: &PolicyContext<'_>) -> Result<String, PolicyError> {
        self.0.next().ok_or_else(|| PolicyError::Other("script exhausted".into()))
    }
}

impl PolicyFactory for Script {
    fn name(&self) -> String {
        "script".into()
    }

    fn build(&self, _: &EpisodeInfo<'_>) -> Box<dyn Policy> {
        Box::new(ScriptPolicy(self.0.clone().into_iter()))
    }
}

/// Oracle that never asks its discovery question.
struct Impatient;

struct ImpatientPolicy {
    inner: OraclePolicy,
    first: bool,
}

impl Policy for ImpatientPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<String, PolicyError> {
        let raw = self.inner.act(ctx)?;
        if std::mem::take(&mut self.first) && raw.contains("ask_shopper") {
            return self.inner.act(ctx);
        }
        Ok(raw)
    }
}

impl PolicyFactory for Impatient {
    fn name(&self) -> String {
        "impatient".into()
    }

    fn build(&self, episode: &EpisodeInfo<'_>) -> Box<dyn Policy> {
        Box::new(ImpatientPolicy { inner: OraclePolicy::new(episode), first: true })
    }
}

fn single_turn_tasks(w: &common::World) -> Vec<&Task> {
    w.tasks.for_scenario(Scenario::SingleTurn).collect()
}

#[test]
fn sft_export_keeps_only_successful_traces() {
    let w = common::world(21, 24);
    let tasks = single_turn_tasks(&w);
    let options = RunOptions::default();
    let mut traces: Vec<EpisodeTrace> = Vec::new();
    for (i, task) in tasks.iter().take(10).enumerate() {
        let factory: &dyn PolicyFactory = if i % 5 < 2 { &OracleFactory } else { &RandomFactory };
        let e = run_episode(&w.env, &w.tasks, task, Scenario::SingleTurn, factory, i as u64, &options).unwrap();
        traces.push(e.trace);
    }
    let wins = traces.iter().filter(|t| t.reward().unwrap().r_succ == 1.0).count();
    assert_eq!(wins, 4);

    let sft = export_sft(&traces, SftFilter::Success);
    assert_eq!(sft.traces_used.len(), 4);
    assert_eq!(sft.traces_seen, 10);
    let steps: usize = traces.iter().filter(|t| t.reward().unwrap().r_succ == 1.0).map(|t| t.actions().len()).sum();
    assert_eq!(sft.records.len(), steps);
    for r in &sft.records {
        assert_eq!(r.messages[0].role, "system");
        assert_eq!(r.messages.len(), 2 * r.step);
        assert_eq!(r.messages.last().unwrap().role, "user");
    }

    let loose = export_sft(&traces, SftFilter::StrictAtLeast(0.0));
    let strict: HashSet<&String> = sft.traces_used.iter().collect();
    assert!(strict.iter().all(|id| loose.traces_used.contains(id)));
    assert_eq!(loose.traces_used.len(), 10);
}

#[test]
fn sft_records_include_shopper_questions() {
    let w = common::world(22, 6);
    let task = w.tasks.for_scenario(Scenario::MultiTurn).next().unwrap();
    let e = run_episode(&w.env, &w.tasks, task, Scenario::MultiTurn, &OracleFactory, 3, &RunOptions::default()).unwrap();
    let sft = export_sft(&[e.trace], SftFilter::Success);
    assert!(sft.records.iter().any(|r| r.action.contains("ask_shopper")));
    let first = &sft.records[0];
    assert!(first.messages[1].content.contains("Shopper:"));
}

#[test]
fn rules_flag_mechanical_errors() {
    let w = common::world(23, 6);
    let task = single_turn_tasks(&w)[0];
    let q = task.target.canonical_query.clone();
    let script = Script(vec![
        format!("search[{q}]"),
        "click[back to search]".into(),
        format!("search[{q}s]"),
        "click[no such button]".into(),
    ]);
    let e = run_episode(&w.env, &w.tasks, task, Scenario::SingleTurn, &script, 1, &RunOptions::default()).unwrap();
    let codes: Vec<ErrorCode> = rule_annotations(&e.trace, Some(task), &w.vocab).iter().map(|a| a.code).collect();
    assert!(codes.contains(&ErrorCode::RepeatedSimilarQuery), "{codes:?}");
    assert!(codes.contains(&ErrorCode::NonexistentButton), "{codes:?}");
}

#[test]
fn buying_after_a_refusal_is_flagged() {
    let w = common::world(24, 6);
    let task = w.tasks.for_scenario(Scenario::MultiTurn).next().unwrap();
    let e = run_episode(&w.env, &w.tasks, task, Scenario::MultiTurn, &Impatient, 2, &RunOptions::default()).unwrap();
    let codes: Vec<ErrorCode> = rule_annotations(&e.trace, Some(task), &w.vocab).iter().map(|a| a.code).collect();
    assert!(codes.contains(&ErrorCode::PurchaseAfterRejection), "{codes:?}");
}

#[test]
fn clean_oracle_traces_have_no_mechanical_errors() {
    let w = common::world(25, 8);
    for scenario in Scenario::ALL {
        for task in w.tasks.for_scenario(scenario) {
            let e = run_episode(&w.env, &w.tasks, task, scenario, &OracleFactory, 0, &RunOptions::default()).unwrap();
            let found = rule_annotations(&e.trace, Some(task), &w.vocab);
            assert!(found.is_empty(), "{} {scenario:?}: {found:?}", task.task_id);
        }
    }
}

#[test]
fn rollout_groups_have_correct_statistics() {
    let w = common::world(26, 8);
    let tasks = single_turn_tasks(&w);
    let factory = NoisyOracleFactory { epsilon: 0.4 };
    let options = RunOptions { base_seed: 9, ..Default::default() };
    let got = collect_rollouts(&w.env, &w.tasks, &tasks, Scenario::SingleTurn, &factory, 4, RewardSelector::Loose, &options)
        .unwrap();
    assert_eq!(got.groups.len(), tasks.len());
    assert_eq!(got.episodes.len(), 4 * tasks.len());
    for g in &got.groups {
        let rewards: Vec<f64> = g.rollouts.iter().map(|r| r.breakdown.r_loose).collect();
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        assert!((g.mean - mean).abs() < 1e-12 && (g.std - std).abs() < 1e-12);
        let seeds: HashSet<u64> = g.rollouts.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 4);
        let strict = g.rescore(RewardSelector::Strict);
        assert_eq!((strict.mean, strict.std), mean_std(&g.rollouts.iter().map(|r| r.breakdown.r_strict).collect::<Vec<_>>()));
    }
}

#[test]
fn groups_need_two_rollouts() {
    let w = common::world(27, 4);
    let tasks = single_turn_tasks(&w);
    let err = collect_rollouts(&w.env, &w.tasks, &tasks, Scenario::SingleTurn, &OracleFactory, 1, RewardSelector::Success, &RunOptions::default())
        .unwrap_err();
    assert!(matches!(err, EvalError::GroupTooSmall(1)));
    let err = collect_rollouts(&w.env, &w.tasks, &[], Scenario::SingleTurn, &OracleFactory, 4, RewardSelector::Success, &RunOptions::default())
        .unwrap_err();
    assert!(matches!(err, EvalError::EmptyTaskSet));
}
