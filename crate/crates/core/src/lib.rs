//! Deterministic text-based shopping simulation.
//!
//! The crate covers the whole in-process engine: the product catalog and its
//! synthetic generator, lexical search, the episode state machine with its
//! `[SEP]` observation format, the simulated shopper, task and profile
//! generation, reward computation and episode traces.

pub mod catalog;
pub mod chat;
pub mod env;
pub mod generate;
pub mod profile;
pub mod prompts;
pub mod replay;
pub mod reward;
pub mod search;
pub mod shopper;
pub mod tasks;
pub mod text;
pub mod trace;

pub use catalog::{load_catalog, Catalog, CatalogError, CategoryPath, Price, Product};
pub use env::{parse_action, Action, ActionKind, EnvError, Environment, Observation, Page, Session, SessionSpec, StepResult};
pub use generate::{generate_catalog, GenerationSpec, Vocabulary};
pub use reward::{score, PurchaseOutcome, RewardBreakdown, RewardSelector, TargetSpec};
pub use search::{ResultPage, SearchError, SearchIndex};
pub use profile::UserProfile;
pub use tasks::{Scenario, ScenarioConfig, Task, TaskSet};
pub use shopper::{Shopper, ShopperSpec};
pub use trace::{EpisodeTrace, TraceEvent, TraceRecorder};
