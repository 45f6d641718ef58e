//! The episode state machine.
//!
//! A [`Session`] owns one episode: the current page, option selections,
//! dialogue, step count and purchase. Every call to [`Session::step`]
//! counts toward the step limit, valid or not; reaching the limit ends the
//! episode without a purchase.

mod action;
mod render;

use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use action::{parse_action, Action, ActionKind, ParseError};
pub use render::{render, Observation, RenderContext, SEP};

use crate::catalog::{Catalog, Product};
use crate::profile::UserProfile;
use crate::reward::{score, PurchaseOutcome, RewardBreakdown};
use crate::search::{SearchError, SearchIndex};
use crate::shopper::{is_confirmation_request, CandidateSummary, Confirmation, Shopper, ShopperError, Turn};
use crate::tasks::{Scenario, ScenarioConfig, Task};
use crate::text;
use crate::trace::{EpisodeTrace, EventKind, PurchaseRecord, Termination, TraceError, TraceHeader, TraceRecorder};

/// Catalog plus its search index, shared by every session.
#[derive(Clone)]
pub struct Environment {
    catalog: Arc<Catalog>,
    index: Arc<SearchIndex>,
}

impl Environment {
    pub fn new(catalog: Catalog) -> Result<Self, SearchError> {
        let index = SearchIndex::build(&catalog)?;
        Ok(Self { catalog: Arc::new(catalog), index: Arc::new(index) })
    }

    pub fn from_parts(catalog: Arc<Catalog>, index: Arc<SearchIndex>) -> Self {
        Self { catalog, index }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetailTab {
    Description,
    Features,
    Reviews,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Page {
    SearchHome,
    Results {
        query: String,
        page: usize,
    },
    Item {
        product_id: String,
        selected: IndexMap<String, String>,
        tab: Option<DetailTab>,
        /// Results page "< prev" returns to.
        from_query: String,
        from_page: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub task_id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub page: Page,
    pub step_count: usize,
    pub step_limit: usize,
    pub dialogue: Vec<Turn>,
    pub opener: Option<String>,
    pub first_search_query: Option<String>,
    pub purchased: Option<PurchaseRecord>,
    pub terminal: bool,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub terminal: bool,
    pub step_count: usize,
    /// Present once the episode ends.
    pub reward: Option<RewardBreakdown>,
    /// Non-fatal complaint about the action, if it was rejected.
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("session already ended")]
    Terminal,
    #[error("ask_shopper is not available in single-turn scenarios")]
    AskInSingleTurn,
    #[error("task {task_id} does not support scenario {scenario}")]
    IncompatibleScenario { task_id: String, scenario: Scenario },
    #[error("personalized scenario needs a profile for task {task_id}")]
    MissingProfile { task_id: String },
    #[error("multi-turn scenario needs a shopper")]
    MissingShopper,
    #[error("shopper failed: {0}")]
    Shopper(#[from] ShopperError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Everything needed to start an episode.
pub struct SessionSpec {
    pub task: Task,
    pub profile: Option<UserProfile>,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub shopper: Option<Box<dyn Shopper>>,
    pub recorder: TraceRecorder,
    pub session_id: Option<String>,
    pub policy: Option<String>,
}

impl SessionSpec {
    pub fn new(task: Task, scenario: ScenarioConfig, seed: u64) -> Self {
        Self {
            task,
            profile: None,
            scenario,
            seed,
            shopper: None,
            recorder: TraceRecorder::logical(),
            session_id: None,
            policy: None,
        }
    }
}

pub struct Session {
    env: Environment,
    task: Task,
    profile_json: Option<String>,
    shopper: Option<Box<dyn Shopper>>,
    recorder: TraceRecorder,
    state: SessionState,
    reward: Option<RewardBreakdown>,
}

/// Why a step did not go through.
enum Fault {
    /// Rejected action; the episode continues.
    Invalid(String),
    Fatal(EnvError),
}

impl From<String> for Fault {
    fn from(s: String) -> Self {
        Fault::Invalid(s)
    }
}

enum Transition {
    Moved(Page),
    Purchased(PurchaseRecord),
}

fn same_button(a: &str, b: &str) -> bool {
    text::squash_whitespace(a) == text::squash_whitespace(b)
}

impl Session {
    pub fn start(env: Environment, spec: SessionSpec) -> Result<(Self, Observation), EnvError> {
        let SessionSpec { task, profile, scenario, seed, shopper, recorder, session_id, policy } = spec;
        let kind = scenario.scenario;
        if !task.supports(kind) {
            return Err(EnvError::IncompatibleScenario { task_id: task.task_id.clone(), scenario: kind });
        }
        if kind.is_personalized() && profile.is_none() {
            return Err(EnvError::MissingProfile { task_id: task.task_id.clone() });
        }
        let shopper = if kind.is_multi_turn() { Some(shopper.ok_or(EnvError::MissingShopper)?) } else { None };
        let profile_json = if kind.is_personalized() && scenario.inject_profile {
            profile.as_ref().map(|p| p.to_compact_json())
        } else {
            None
        };
        let state = SessionState {
            task_id: task.task_id.clone(),
            scenario: kind,
            seed,
            page: Page::SearchHome,
            step_count: 0,
            step_limit: scenario.step_limit,
            dialogue: Vec::new(),
            opener: None,
            first_search_query: None,
            purchased: None,
            terminal: false,
            termination: None,
        };
        let header = TraceHeader {
            format_version: crate::trace::TRACE_FORMAT_VERSION,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            session_id,
            task_id: task.task_id.clone(),
            scenario: kind,
            seed,
            step_limit: scenario.step_limit,
            catalog: env.catalog().manifest().name.clone(),
            profile_ref: task.profile_ref.clone(),
            shopper: shopper.as_ref().map(|s| s.spec()),
            policy,
        };
        let mut session = Self { env, task, profile_json, shopper, recorder, state, reward: None };
        session.recorder.record(0, EventKind::Header(header))?;
        if let Some(shopper) = session.shopper.as_mut() {
            let opener = shopper.open()?;
            session.state.dialogue.push(Turn::shopper(opener.clone()));
            session.state.opener = Some(opener.clone());
            session.recorder.record(0, EventKind::Shopper { text: opener, confirmation: None })?;
        }
        let mut obs = session.render();
        obs.shopper_utterance = session.state.opener.clone();
        session.record_observation(&obs)?;
        Ok((session, obs))
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn is_terminal(&self) -> bool {
        self.state.terminal
    }

    pub fn reward(&self) -> Option<&RewardBreakdown> {
        self.reward.as_ref()
    }

    pub fn trace(&self) -> EpisodeTrace {
        self.recorder.trace()
    }

    pub fn render(&self) -> Observation {
        let ctx = RenderContext {
            instruction: self.state.opener.as_deref().unwrap_or(&self.task.instruction),
            profile_json: self.profile_json.as_deref(),
        };
        render(&self.state.page, &ctx, self.env.catalog(), self.env.index())
    }

    fn record_observation(&mut self, obs: &Observation) -> Result<(), TraceError> {
        self.recorder.record(
            self.state.step_count,
            EventKind::Observation {
                text: obs.text.clone(),
                search_available: obs.search_available,
                clickable: obs.clickable.clone(),
                shopper_utterance: obs.shopper_utterance.clone(),
            },
        )
    }

    /// Parses and applies raw agent output. Unparseable output is an
    /// invalid (but counted) step.
    pub fn step(&mut self, raw: &str) -> Result<StepResult, EnvError> {
        match parse_action(raw) {
            Ok(action) => self.step_action(action),
            Err(e) => {
                self.guard()?;
                self.apply(raw, None, |_| Err(Fault::Invalid(format!("could not parse an action: {}", e.reason))))
            }
        }
    }

    pub fn step_action(&mut self, action: Action) -> Result<StepResult, EnvError> {
        self.guard()?;
        if matches!(action.kind, ActionKind::AskShopper(_)) && !self.state.scenario.is_multi_turn() {
            return Err(EnvError::AskInSingleTurn);
        }
        let kind = action.kind.clone();
        self.apply(&action.raw_text, Some(kind.clone()), |s| s.dispatch(&kind))
    }

    fn guard(&self) -> Result<(), EnvError> {
        if self.state.terminal {
            Err(EnvError::Terminal)
        } else {
            Ok(())
        }
    }

    /// Common bookkeeping around one step.
    fn apply(
        &mut self,
        raw: &str,
        parsed: Option<ActionKind>,
        run: impl FnOnce(&mut Self) -> Result<Option<String>, Fault>,
    ) -> Result<StepResult, EnvError> {
        self.state.step_count += 1;
        let step = self.state.step_count;
        self.recorder.record(step, EventKind::Action { raw: raw.to_string(), parsed })?;
        let outcome = run(self);
        let (mut obs, error) = match outcome {
            Ok(utterance) => {
                let mut obs = self.render();
                obs.shopper_utterance = utterance;
                (obs, None)
            }
            Err(Fault::Fatal(e)) => {
                if matches!(e, EnvError::Shopper(_)) {
                    self.abort(&e.to_string())?;
                }
                return Err(e);
            }
            Err(Fault::Invalid(message)) => {
                self.recorder.record(step, EventKind::Error { message: message.clone(), fatal: false })?;
                let page = self.render();
                let obs = Observation {
                    text: format!("Error: {message}{SEP}{}", page.text),
                    search_available: page.search_available,
                    clickable: page.clickable,
                    shopper_utterance: None,
                };
                (obs, Some(message))
            }
        };
        if !self.state.terminal && self.state.step_count >= self.state.step_limit {
            self.state.terminal = true;
            self.state.termination = Some(Termination::StepLimit);
        }
        if self.state.terminal {
            obs.search_available = false;
        }
        self.record_observation(&obs)?;
        if self.state.terminal {
            self.finish(None)?;
        }
        Ok(StepResult {
            observation: obs,
            terminal: self.state.terminal,
            step_count: self.state.step_count,
            reward: self.reward.clone(),
            error,
        })
    }

    /// Ends the episode without a purchase, e.g. after a backend failure.
    pub fn abort(&mut self, reason: &str) -> Result<(), EnvError> {
        self.guard()?;
        let step = self.state.step_count;
        self.recorder.record(step, EventKind::Error { message: reason.to_string(), fatal: true })?;
        self.state.terminal = true;
        self.state.termination = Some(Termination::Aborted);
        self.finish(Some(reason.to_string()))?;
        Ok(())
    }

    fn finish(&mut self, reason: Option<String>) -> Result<(), TraceError> {
        let outcome = self.state.purchased.as_ref().map(|p| self.outcome(p));
        let reward = score(&self.task.target, outcome.as_ref());
        self.reward = Some(reward.clone());
        self.recorder.record(
            self.state.step_count,
            EventKind::Final {
                termination: self.state.termination.unwrap_or(Termination::Aborted),
                purchase: self.state.purchased.clone(),
                reward,
                reason,
            },
        )
    }

    fn outcome(&self, p: &PurchaseRecord) -> PurchaseOutcome {
        let product = self.env.catalog().get_product(&p.product_id).expect("purchased product exists").clone();
        PurchaseOutcome {
            product,
            selected_options: p.selected_options.clone(),
            effective_price: p.effective_price,
            first_search_query: p.first_search_query.clone(),
        }
    }

    fn dispatch(&mut self, kind: &ActionKind) -> Result<Option<String>, Fault> {
        match kind {
            ActionKind::AskShopper(message) => self.ask(message).map(Some),
            ActionKind::Search(query) => {
                if !matches!(self.state.page, Page::SearchHome) {
                    return Err(Fault::Invalid("search is not available on this page".into()));
                }
                match self.env.index().search(query, 1) {
                    Ok(_) => {}
                    Err(SearchError::EmptyQuery) => return Err("the query has no searchable terms".to_string().into()),
                    Err(e) => return Err(e.to_string().into()),
                }
                if self.state.first_search_query.is_none() {
                    self.state.first_search_query = Some(query.clone());
                }
                self.state.page = Page::Results { query: query.clone(), page: 1 };
                Ok(None)
            }
            ActionKind::Click(value) => {
                let clickable = self.render().clickable;
                let Some(button) = clickable.iter().find(|b| same_button(b, value)).cloned() else {
                    return Err(format!("\"{value}\" is not a clickable button on this page").into());
                };
                match self.click(&button) {
                    Transition::Moved(page) => self.state.page = page,
                    Transition::Purchased(record) => {
                        self.state.purchased = Some(record);
                        self.state.terminal = true;
                        self.state.termination = Some(Termination::Purchased);
                    }
                }
                Ok(None)
            }
        }
    }

    fn click(&self, button: &str) -> Transition {
        if button == "back to search" {
            return Transition::Moved(Page::SearchHome);
        }
        match &self.state.page {
            Page::SearchHome => unreachable!("search home has no buttons"),
            Page::Results { query, page } => Transition::Moved(match button {
                "next >" => Page::Results { query: query.clone(), page: page + 1 },
                "< prev" => Page::Results { query: query.clone(), page: page - 1 },
                id => Page::Item {
                    product_id: id.to_string(),
                    selected: IndexMap::new(),
                    tab: None,
                    from_query: query.clone(),
                    from_page: *page,
                },
            }),
            Page::Item { product_id, selected, tab, from_query, from_page } => {
                let tab_of = |t| {
                    Page::Item {
                        product_id: product_id.clone(),
                        selected: selected.clone(),
                        tab: Some(t),
                        from_query: from_query.clone(),
                        from_page: *from_page,
                    }
                };
                match button {
                    "< prev" => Transition::Moved(Page::Results { query: from_query.clone(), page: *from_page }),
                    "description" => Transition::Moved(tab_of(DetailTab::Description)),
                    "features" => Transition::Moved(tab_of(DetailTab::Features)),
                    "reviews" => Transition::Moved(tab_of(DetailTab::Reviews)),
                    "buy now" => {
                        let product = self.product(product_id);
                        Transition::Purchased(PurchaseRecord {
                            product_id: product_id.clone(),
                            selected_options: selected.clone(),
                            effective_price: product.effective_price(selected),
                            first_search_query: self.state.first_search_query.clone(),
                        })
                    }
                    value => {
                        let product = self.product(product_id);
                        let group = product.group_of(value).expect("option button belongs to a group").to_string();
                        let mut selected = selected.clone();
                        selected.insert(group, value.to_string());
                        Transition::Moved(Page::Item {
                            product_id: product_id.clone(),
                            selected,
                            tab: *tab,
                            from_query: from_query.clone(),
                            from_page: *from_page,
                        })
                    }
                }
            }
        }
    }

    fn product(&self, id: &str) -> &Product {
        self.env.catalog().get_product(id).expect("page refers to a catalog product")
    }

    fn ask(&mut self, message: &str) -> Result<String, Fault> {
        self.state.dialogue.push(Turn::agent(message));
        let candidate = match &self.state.page {
            Page::Item { product_id, selected, .. } if is_confirmation_request(message) => {
                let product = self.product(product_id).clone();
                let effective_price = product.effective_price(selected);
                Some(CandidateSummary { product, selected_options: selected.clone(), effective_price })
            }
            _ => None,
        };
        let shopper = self.shopper.as_mut().expect("multi-turn sessions have a shopper");
        let result = match &candidate {
            Some(c) => shopper.confirm_purchase(&self.state.dialogue, c).map(|conf| {
                let approved = matches!(conf, Confirmation::Approve(_));
                (conf.utterance().to_string(), Some(approved))
            }),
            None => shopper.reply(&self.state.dialogue, message).map(|r| (r, None)),
        };
        let (text, confirmation) = result.map_err(|e| Fault::Fatal(e.into()))?;
        self.state.dialogue.push(Turn::shopper(text.clone()));
        self.recorder
            .record(self.state.step_count, EventKind::Shopper { text: text.clone(), confirmation })
            .map_err(|e| Fault::Fatal(e.into()))?;
        Ok(text)
    }
}
