//! Per-scenario reward means and step statistics.
//!
//! Means are taken over sorted values so the table does not depend on the
//! order episodes finished in; recomputing from persisted traces gives the
//! identical table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use shopsim_core::reward::RewardBreakdown;
use shopsim_core::tasks::Scenario;
use shopsim_core::trace::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardMeans {
    pub r_loose: f64,
    pub r_strict: f64,
    pub r_succ: f64,
    pub r_finish: f64,
    pub r_cat: f64,
    pub r_att: f64,
    pub r_opt: f64,
    pub r_price: f64,
}

impl RewardMeans {
    pub const COLUMNS: [&'static str; 8] =
        ["r_loose", "r_strict", "r_succ", "r_finish", "r_cat", "r_att", "r_opt", "r_price"];

    pub fn values(&self) -> [f64; 8] {
        [self.r_loose, self.r_strict, self.r_succ, self.r_finish, self.r_cat, self.r_att, self.r_opt, self.r_price]
    }

    fn from_values(v: [f64; 8]) -> Self {
        Self {
            r_loose: v[0],
            r_strict: v[1],
            r_succ: v[2],
            r_finish: v[3],
            r_cat: v[4],
            r_att: v[5],
            r_opt: v[6],
            r_price: v[7],
        }
    }

    fn of(r: &RewardBreakdown) -> [f64; 8] {
        [r.r_loose, r.r_strict, r.r_succ, r.r_finish, r.r_cat, r.r_att, r.r_opt, r.r_price]
    }
}

pub(crate) fn sorted_mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub episodes: usize,
    pub rewards: RewardMeans,
    /// Every agent action counts, questions to the shopper included.
    pub mean_steps: f64,
    pub p50_steps: usize,
    pub p90_steps: usize,
    pub max_steps: usize,
    pub step_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenarios: BTreeMap<Scenario, ScenarioMetrics>,
    /// Mean of the per-scenario means.
    pub overall: RewardMeans,
    /// All four scenarios are present.
    pub complete: bool,
}

fn nearest_rank(sorted: &[usize], pct: f64) -> usize {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl MetricsTable {
    pub fn from_episodes<'a>(episodes: impl IntoIterator<Item = (Scenario, &'a RewardBreakdown, usize)>) -> Self {
        let mut grouped: BTreeMap<Scenario, Vec<(&RewardBreakdown, usize)>> = BTreeMap::new();
        for (s, r, steps) in episodes {
            grouped.entry(s).or_default().push((r, steps));
        }
        let scenarios: BTreeMap<Scenario, ScenarioMetrics> = grouped
            .into_iter()
            .map(|(s, rows)| {
                let mut columns: [Vec<f64>; 8] = Default::default();
                for (r, _) in &rows {
                    for (col, v) in columns.iter_mut().zip(RewardMeans::of(r)) {
                        col.push(v);
                    }
                }
                let means = columns.map(|mut c| sorted_mean(&mut c));
                let mut steps: Vec<usize> = rows.iter().map(|(_, n)| *n).collect();
                steps.sort_unstable();
                let mut histogram = BTreeMap::new();
                for n in &steps {
                    *histogram.entry(*n).or_insert(0) += 1;
                }
                let metrics = ScenarioMetrics {
                    episodes: rows.len(),
                    rewards: RewardMeans::from_values(means),
                    mean_steps: steps.iter().sum::<usize>() as f64 / steps.len() as f64,
                    p50_steps: nearest_rank(&steps, 50.0),
                    p90_steps: nearest_rank(&steps, 90.0),
                    max_steps: *steps.last().expect("non-empty group"),
                    step_histogram: histogram,
                };
                (s, metrics)
            })
            .collect();
        let mut overall = [0.0; 8];
        for m in scenarios.values() {
            for (o, v) in overall.iter_mut().zip(m.rewards.values()) {
                *o += v;
            }
        }
        if !scenarios.is_empty() {
            overall = overall.map(|v| v / scenarios.len() as f64);
        }
        Self {
            complete: Scenario::ALL.iter().all(|s| scenarios.contains_key(s)),
            overall: RewardMeans::from_values(overall),
            scenarios,
        }
    }

    /// Rebuilds the table from persisted traces. Non-terminal traces are
    /// rejected.
    pub fn from_traces(traces: &[EpisodeTrace]) -> Result<Self, String> {
        let mut rows = Vec::with_capacity(traces.len());
        for (i, t) in traces.iter().enumerate() {
            let header = t.header().ok_or_else(|| format!("trace {i} has no header"))?;
            let reward = t.reward().ok_or_else(|| format!("trace {i} ({}) is not terminal", header.task_id))?;
            rows.push((header.scenario, reward, t.step_count()));
        }
        Ok(Self::from_episodes(rows))
    }
}
