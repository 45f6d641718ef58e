//! Grouped rollouts for group-relative advantage training: `G` episodes
//! per task with distinct derived seeds, scored by a selectable reward.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shopsim_core::env::Environment;
use shopsim_core::reward::{RewardBreakdown, RewardSelector};
use shopsim_core::tasks::{Scenario, Task, TaskSet};

use crate::harness::{derive_seed, pool, run_episode, EpisodeResult, EvalError, RunOptions};
use crate::policy::PolicyFactory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub seed: u64,
    pub breakdown: RewardBreakdown,
    pub reward: f64,
    pub advantage: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub task_id: String,
    pub scenario: Scenario,
    pub selector: RewardSelector,
    pub rollouts: Vec<Rollout>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Every rollout produced the same action sequence.
    pub identical: bool,
}

impl RolloutGroup {
    fn build(task_id: String, scenario: Scenario, selector: RewardSelector, episodes: &[EpisodeResult]) -> Self {
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward.field(selector)).collect();
        let (mean, std) = mean_std(&rewards);
        let rollouts = episodes
            .iter()
            .zip(&rewards)
            .map(|(e, r)| Rollout {
                seed: e.seed,
                breakdown: e.reward,
                reward: *r,
                advantage: if std > 0.0 { (r - mean) / std } else { 0.0 },
                steps: e.steps,
                trace_path: e.trace_path.clone(),
            })
            .collect();
        let first = episodes[0].trace.actions();
        let identical = episodes.iter().all(|e| e.trace.actions() == first);
        Self { task_id, scenario, selector, rollouts, mean, std, identical }
    }

    /// The same group scored with another reward.
    pub fn rescore(&self, selector: RewardSelector) -> Self {
        let rewards: Vec<f64> = self.rollouts.iter().map(|r| r.breakdown.field(selector)).collect();
        let (mean, std) = mean_std(&rewards);
        let rollouts = self
            .rollouts
            .iter()
            .zip(&rewards)
            .map(|(r, v)| Rollout {
                reward: *v,
                advantage: if std > 0.0 { (v - mean) / std } else { 0.0 },
                ..r.clone()
            })
            .collect();
        Self { selector, rollouts, mean, std, ..self.clone() }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct RolloutCollection {
    pub groups: Vec<RolloutGroup>,
    /// Groups whose rollouts were all identical; a sign of a deterministic
    /// policy.
    pub identical_groups: usize,
    pub episodes: Vec<EpisodeResult>,
}

pub fn collect_rollouts(
    env: &Environment,
    tasks: &TaskSet,
    selected: &[&Task],
    scenario: Scenario,
    factory: &dyn PolicyFactory,
    group_size: usize,
    selector: RewardSelector,
    options: &RunOptions,
) -> Result<RolloutCollection, EvalError> {
    if group_size < 2 {
        return Err(EvalError::GroupTooSmall(group_size));
    }
    if selected.is_empty() {
        return Err(EvalError::EmptyTaskSet);
    }
    let jobs: Vec<(&Task, usize)> = selected.iter().flat_map(|t| (0..group_size).map(move |i| (*t, i))).collect();
    let episodes: Vec<EpisodeResult> = pool(options.parallelism)?.install(|| {
        jobs.par_iter()
            .map(|(task, i)| {
                let seed = derive_seed(options.base_seed, &task.task_id, scenario, *i);
                run_episode(env, tasks, task, scenario, factory, seed, options)
            })
            .collect::<Result<_, _>>()
    })?;
    let groups: Vec<RolloutGroup> = episodes
        .chunks(group_size)
        .map(|chunk| RolloutGroup::build(chunk[0].task_id.clone(), scenario, selector, chunk))
        .collect();
    let identical_groups = groups.iter().filter(|g| g.identical).count();
    if identical_groups > 0 {
        tracing::warn!(identical_groups, "some rollout groups have no variation");
    }
    Ok(RolloutCollection { groups, identical_groups, episodes })
}

/// One JSON line per group.
pub fn write_groups(path: &Path, groups: &[RolloutGroup]) -> Result<(), EvalError> {
    let mut out = String::new();
    for g in groups {
        out.push_str(&serde_json::to_string(g).expect("group serializes"));
        out.push('\n');
    }
    crate::write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_population_std() {
        let (m, s) = mean_std(&[1.0, 0.0, 1.0, 0.0]);
        assert_eq!((m, s), (0.5, 0.5));
        assert_eq!(mean_std(&[0.3, 0.3]), (0.3, 0.0));
    }
}
