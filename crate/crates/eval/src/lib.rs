//! Evaluation harness: policies, batch runs, metrics, grouped rollouts,
//! SFT export and error annotation.

pub mod annotate;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod rollouts;
pub mod sft;

use std::path::Path;

pub use annotate::{annotate_errors, AnnotationReport, Classifier, ErrorAnnotation, ErrorCode, ErrorFamily, LlmClassifier};
pub use harness::{
    derive_seed, run_episode, run_evaluation, trace_path, write_results, EpisodeResult, EvalError, Evaluation,
    RunOptions, ShopperBackend, DEFAULT_PARALLELISM,
};
pub use metrics::{MetricsTable, RewardMeans, ScenarioMetrics};
pub use policy::{Policy, PolicyContext, PolicyError, PolicyFactory};
pub use rollouts::{collect_rollouts, write_groups, Rollout, RolloutCollection, RolloutGroup};
pub use sft::{export_sft, SftDataset, SftFilter, SftRecord};

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}
