//! Agents that turn an observation into one raw action string.

mod llm;
mod oracle;
mod random;

use shopsim_core::catalog::Catalog;
use shopsim_core::chat::ChatError;
use shopsim_core::env::{Observation, SEP};
use shopsim_core::profile::UserProfile;
use shopsim_core::shopper::Turn;
use shopsim_core::tasks::{Scenario, Task};

pub use llm::{LlmPolicy, LlmPolicyFactory};
pub use oracle::{NoisyOracleFactory, OraclePolicy, OracleFactory};
pub use random::{RandomFactory, RandomPolicy};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy backend: {0}")]
    Backend(#[from] ChatError),
    #[error("{0}")]
    Other(String),
}

/// What the agent sees before acting.
pub struct PolicyContext<'a> {
    pub observation: &'a Observation,
    pub dialogue: &'a [Turn],
    pub profile: Option<&'a UserProfile>,
    pub scenario: Scenario,
    pub step: usize,
}

pub trait Policy: Send {
    /// Exactly one action per call.
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<String, PolicyError>;
}

/// Episode facts available when a policy is built. Only test-fixture
/// policies look at the task or catalog.
pub struct EpisodeInfo<'a> {
    pub task: &'a Task,
    pub catalog: &'a Catalog,
    pub profile: Option<&'a UserProfile>,
    pub scenario: Scenario,
    pub seed: u64,
}

pub trait PolicyFactory: Send + Sync {
    fn name(&self) -> String;

    fn build(&self, episode: &EpisodeInfo<'_>) -> Box<dyn Policy>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PageKind {
    Home,
    Results,
    Item,
}

pub(crate) fn page_kind(obs: &Observation) -> PageKind {
    if obs.search_available {
        PageKind::Home
    } else if obs.clickable.iter().any(|c| c == "buy now") {
        PageKind::Item
    } else {
        PageKind::Results
    }
}

/// The segment after `Instruction:`, i.e. the instruction or the opener.
pub(crate) fn instruction_of(obs: &Observation) -> &str {
    let text = obs.text.strip_prefix("Error: ").and_then(|t| t.split_once(SEP)).map(|(_, t)| t).unwrap_or(&obs.text);
    let mut parts = text.split(SEP);
    parts.find(|p| *p == "Instruction:");
    parts.next().unwrap_or_default()
}
