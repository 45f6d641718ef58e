//! Runs policies over task sets, one session per episode.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shopsim_core::chat::{ChatClient, ChatConfig};
use shopsim_core::env::{EnvError, Environment, Session, SessionSpec};
use shopsim_core::reward::RewardBreakdown;
use shopsim_core::shopper::{LlmShopper, ScriptedConfig, ScriptedShopper, Shopper};
use shopsim_core::tasks::{Scenario, ScenarioConfig, Task, TaskError, TaskSet};
use shopsim_core::trace::{EpisodeTrace, LogicalClock, Termination, TraceError, TraceRecorder};

use crate::metrics::MetricsTable;
use crate::policy::{EpisodeInfo, PolicyContext, PolicyFactory};

pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no tasks to run")]
    EmptyTaskSet,
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("shopper backend: {0}")]
    Shopper(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub enum ShopperBackend {
    Scripted(ScriptedConfig),
    Llm(ChatConfig),
}

impl Default for ShopperBackend {
    fn default() -> Self {
        ShopperBackend::Scripted(ScriptedConfig::default())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub parallelism: usize,
    pub base_seed: u64,
    pub shopper: ShopperBackend,
    /// Traces go to `<dir>/<scenario>/<task>__<seed>.jsonl` when set.
    pub trace_dir: Option<PathBuf>,
    /// Overrides the scenario's default step limit.
    pub step_limit: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: DEFAULT_PARALLELISM,
            base_seed: 0,
            shopper: ShopperBackend::default(),
            trace_dir: None,
            step_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub policy: String,
    pub reward: RewardBreakdown,
    pub steps: usize,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    #[serde(skip)]
    pub trace: EpisodeTrace,
}

/// FNV-1a over the parts, finished with splitmix64. Stable across
/// platforms and toolchains.
pub fn derive_seed(base: u64, task_id: &str, scenario: Scenario, index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&base.to_le_bytes());
    feed(task_id.as_bytes());
    feed(scenario.as_str().as_bytes());
    feed(&(index as u64).to_le_bytes());
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trace_path(dir: &Path, scenario: Scenario, task_id: &str, seed: u64) -> PathBuf {
    dir.join(scenario.as_str()).join(format!("{task_id}__{seed}.jsonl"))
}

fn build_shopper(backend: &ShopperBackend, task: &Task, scenario: Scenario, seed: u64) -> Result<Box<dyn Shopper>, EvalError> {
    Ok(match backend {
        ShopperBackend::Scripted(cfg) => Box::new(ScriptedShopper::new(task, scenario, seed, cfg.clone())),
        ShopperBackend::Llm(cfg) => {
            let client = ChatClient::http(cfg.clone()).map_err(|e| EvalError::Shopper(e.to_string()))?;
            Box::new(LlmShopper::new(client, task, scenario))
        }
    })
}

/// Runs one episode to a terminal state. Policy failures end the episode
/// with a zero reward and an error event rather than an `Err`.
pub fn run_episode(
    env: &Environment,
    tasks: &TaskSet,
    task: &Task,
    scenario: Scenario,
    factory: &dyn PolicyFactory,
    seed: u64,
    options: &RunOptions,
) -> Result<EpisodeResult, EvalError> {
    let mut config = ScenarioConfig::new(scenario);
    if let Some(limit) = options.step_limit {
        config.step_limit = limit;
    }
    let profile = tasks.profile_for(task)?.cloned();
    let mut spec = SessionSpec::new(task.clone(), config, seed);
    spec.profile = profile.clone();
    spec.policy = Some(factory.name());
    if scenario.is_multi_turn() {
        spec.shopper = Some(build_shopper(&options.shopper, task, scenario, seed)?);
    }
    let path = options.trace_dir.as_ref().map(|d| trace_path(d, scenario, &task.task_id, seed));
    if let Some(p) = &path {
        spec.recorder = TraceRecorder::to_file(p, Box::new(LogicalClock::default()))?;
    }

    let (mut session, mut obs) = Session::start(env.clone(), spec)?;
    let mut policy = factory.build(&EpisodeInfo {
        task,
        catalog: env.catalog(),
        profile: profile.as_ref(),
        scenario,
        seed,
    });
    let mut error = None;
    while !session.is_terminal() {
        let ctx = PolicyContext {
            observation: &obs,
            dialogue: &session.state().dialogue,
            profile: profile.as_ref(),
            scenario,
            step: session.state().step_count,
        };
        let raw = match policy.act(&ctx) {
            Ok(raw) => raw,
            Err(e) => {
                let reason = format!("policy failed: {e}");
                session.abort(&reason)?;
                error = Some(reason);
                break;
            }
        };
        match session.step(&raw) {
            Ok(result) => obs = result.observation,
            Err(e @ (EnvError::AskInSingleTurn | EnvError::Shopper(_))) => {
                if !session.is_terminal() {
                    session.abort(&e.to_string())?;
                }
                error = Some(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let state = session.state();
    Ok(EpisodeResult {
        task_id: task.task_id.clone(),
        scenario,
        seed,
        policy: factory.name(),
        reward: session.reward().copied().unwrap_or_default(),
        steps: state.step_count,
        termination: state.termination.unwrap_or(Termination::Aborted),
        error,
        trace_path: path,
        trace: session.trace(),
    })
}

pub(crate) fn pool(parallelism: usize) -> Result<rayon::ThreadPool, EvalError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: MetricsTable,
    pub episodes: Vec<EpisodeResult>,
}

/// Every task supporting each scenario, run concurrently. Results come
/// back in (scenario, task) order regardless of scheduling.
pub fn run_evaluation(
    env: &Environment,
    tasks: &TaskSet,
    scenarios: &[Scenario],
    factory: &dyn PolicyFactory,
    options: &RunOptions,
) -> Result<Evaluation, EvalError> {
    let jobs: Vec<(Scenario, &Task)> =
        scenarios.iter().flat_map(|s| tasks.for_scenario(*s).map(move |t| (*s, t))).collect();
    if jobs.is_empty() {
        return Err(EvalError::EmptyTaskSet);
    }
    let episodes: Vec<EpisodeResult> = pool(options.parallelism)?.install(|| {
        jobs.par_iter()
            .map(|(scenario, task)| {
                let seed = derive_seed(options.base_seed, &task.task_id, *scenario, 0);
                run_episode(env, tasks, task, *scenario, factory, seed, options)
            })
            .collect::<Result<_, _>>()
    })?;
    let metrics = MetricsTable::from_episodes(episodes.iter().map(|e| (e.scenario, &e.reward, e.steps)));
    Ok(Evaluation { metrics, episodes })
}

/// Writes one JSON line per episode result.
pub fn write_results(path: &Path, episodes: &[EpisodeResult]) -> Result<(), EvalError> {
    let mut out = String::new();
    for e in episodes {
        out.push_str(&serde_json::to_string(e).expect("result serializes"));
        out.push('\n');
    }
    crate::write_file(path, &out)
}
