//! Session registry shared by all handlers.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use shopsim_core::catalog::Catalog;
use shopsim_core::env::{EnvError, Environment, Observation, Session, SessionSpec, StepResult};
use shopsim_core::reward::RewardBreakdown;
use shopsim_core::search::{SearchError, SearchIndex};
use shopsim_core::shopper::{LlmShopper, ScriptedConfig, ScriptedShopper, Shopper};
use shopsim_core::chat::{ChatClient, ChatConfig};
use shopsim_core::tasks::{Scenario, ScenarioConfig, TaskSet};
use shopsim_core::trace::{Clock, EpisodeTrace, Termination, TraceRecorder, WallClock};

use crate::config::GatewayConfig;
use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Live,
    Terminal,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub task_id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub created_at: String,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShopperChoice {
    Scripted(#[serde(default)] ScriptedConfig),
    Llm(ChatConfig),
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    pub task_id: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shopper: Option<ShopperChoice>,
}

/// Observation fields plus episode status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBody {
    pub text: String,
    pub search_available: bool,
    pub clickable: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shopper_utterance: Option<String>,
    pub step_count: usize,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ObservationBody {
    fn new(obs: Observation, session: &Session, error: Option<String>) -> Self {
        let state = session.state();
        Self {
            text: obs.text,
            search_available: obs.search_available,
            clickable: obs.clickable,
            shopper_utterance: obs.shopper_utterance,
            step_count: state.step_count,
            terminal: state.terminal,
            reward: session.reward().copied(),
            termination: state.termination,
            error,
        }
    }
}

struct Slot {
    handle: Mutex<SessionHandle>,
    session: Arc<tokio::sync::Mutex<Option<Session>>>,
    last_active: Mutex<Instant>,
}

impl Slot {
    fn status(&self) -> SessionStatus {
        self.handle.lock().expect("handle lock").status
    }

    fn set_status(&self, status: SessionStatus) {
        self.handle.lock().expect("handle lock").status = status;
    }

    fn touch(&self) {
        *self.last_active.lock().expect("clock lock") = Instant::now();
    }

    fn idle(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_active.lock().expect("clock lock"))
    }
}

#[derive(Default)]
struct Registry {
    slots: HashMap<String, Arc<Slot>>,
    /// Creations admitted but not yet inserted.
    pending: usize,
    created: u64,
}

impl Registry {
    fn live(&self) -> usize {
        self.slots.values().filter(|s| s.status() == SessionStatus::Live).count()
    }
}

pub struct GatewayState {
    pub config: GatewayConfig,
    catalog: Arc<Catalog>,
    tasks: TaskSet,
    env: OnceLock<Environment>,
    registry: Mutex<Registry>,
    id_prefix: String,
}

pub type SharedState = Arc<GatewayState>;

impl GatewayState {
    /// The index is not built yet; call [`GatewayState::build_index`].
    pub fn new(config: GatewayConfig, catalog: Catalog, tasks: TaskSet) -> SharedState {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Arc::new(Self {
            config,
            catalog: Arc::new(catalog),
            tasks,
            env: OnceLock::new(),
            registry: Mutex::new(Registry::default()),
            id_prefix: format!("{started:x}"),
        })
    }

    pub fn build_index(&self) -> Result<(), SearchError> {
        if self.env.get().is_none() {
            let index = SearchIndex::build(&self.catalog)?;
            let _ = self.env.set(Environment::from_parts(self.catalog.clone(), Arc::new(index)));
            tracing::info!(products = self.catalog.len(), "search index ready");
        }
        Ok(())
    }

    pub fn is_ready(&self) -> bool {
        self.env.get().is_some()
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn live_sessions(&self) -> usize {
        self.registry.lock().expect("registry lock").live()
    }

    fn env(&self) -> Result<&Environment, ApiError> {
        self.env.get().ok_or_else(ApiError::not_ready)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        let slot = self
            .registry
            .lock()
            .expect("registry lock")
            .slots
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))?;
        self.expire_if_idle(&slot, Instant::now());
        Ok(slot)
    }

    fn expire_if_idle(&self, slot: &Slot, now: Instant) -> bool {
        if slot.status() != SessionStatus::Live || slot.idle(now) < self.config.idle_timeout() {
            return false;
        }
        let Ok(mut guard) = slot.session.clone().try_lock_owned() else { return false };
        if let Some(mut session) = guard.take() {
            if !session.is_terminal() {
                let _ = session.abort("session expired");
            }
        }
        slot.set_status(SessionStatus::Expired);
        true
    }

    /// Expires idle live sessions and forgets terminal or expired ones idle
    /// for another full timeout. Returns how many were expired.
    pub fn sweep(&self) -> usize {
        let now = Instant::now();
        let slots: Vec<(String, Arc<Slot>)> =
            self.registry.lock().expect("registry lock").slots.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut expired = 0;
        let mut forget = Vec::new();
        for (id, slot) in slots {
            if self.expire_if_idle(&slot, now) {
                expired += 1;
            } else if slot.status() != SessionStatus::Live && slot.idle(now) >= 2 * self.config.idle_timeout() {
                forget.push(id);
            }
        }
        let mut reg = self.registry.lock().expect("registry lock");
        for id in forget {
            reg.slots.remove(&id);
        }
        expired
    }

    fn trace_path(&self, id: &str) -> PathBuf {
        self.config.trace_dir.join(format!("{id}.jsonl"))
    }

    fn build_shopper(&self, choice: Option<ShopperChoice>, spec: &SessionSpec) -> Result<Box<dyn Shopper>, ApiError> {
        let scenario = spec.scenario.scenario;
        Ok(match choice.unwrap_or_else(|| ShopperChoice::Scripted(self.config.shopper.clone())) {
            ShopperChoice::Scripted(cfg) => Box::new(ScriptedShopper::new(&spec.task, scenario, spec.seed, cfg)),
            ShopperChoice::Llm(cfg) => {
                let client = ChatClient::http(cfg).map_err(|e| ApiError::bad_request(e.to_string()))?;
                Box::new(LlmShopper::new(client, &spec.task, scenario))
            }
        })
    }

    /// Blocking: may call a shopper backend for the opener.
    pub fn create(&self, req: CreateRequest) -> Result<(SessionHandle, ObservationBody), ApiError> {
        let env = self.env()?.clone();
        let task = self.tasks.get(&req.task_id).map_err(|_| ApiError::not_found(format!("unknown task {:?}", req.task_id)))?;
        if !task.supports(req.scenario) {
            return Err(ApiError::unprocessable(format!("task {:?} does not support {}", task.task_id, req.scenario)));
        }
        let profile = self.tasks.profile_for(task).map_err(|e| ApiError::internal(e.to_string()))?.cloned();
        let id = {
            let mut reg = self.registry.lock().expect("registry lock");
            if reg.live() + reg.pending >= self.config.max_sessions {
                return Err(ApiError::capacity(self.config.max_sessions));
            }
            reg.pending += 1;
            reg.created += 1;
            format!("{}-{:06}", self.id_prefix, reg.created)
        };
        let started = self.start_session(env, &id, req, task.clone(), profile);
        let mut reg = self.registry.lock().expect("registry lock");
        reg.pending -= 1;
        let (handle, session, body) = started?;
        let slot = Arc::new(Slot {
            handle: Mutex::new(handle.clone()),
            session: Arc::new(tokio::sync::Mutex::new(Some(session))),
            last_active: Mutex::new(Instant::now()),
        });
        reg.slots.insert(id, slot);
        Ok((handle, body))
    }

    fn start_session(
        &self,
        env: Environment,
        id: &str,
        req: CreateRequest,
        task: shopsim_core::tasks::Task,
        profile: Option<shopsim_core::profile::UserProfile>,
    ) -> Result<(SessionHandle, Session, ObservationBody), ApiError> {
        let mut spec = SessionSpec::new(task, ScenarioConfig::new(req.scenario), req.seed);
        spec.profile = profile;
        spec.session_id = Some(id.to_string());
        spec.recorder =
            TraceRecorder::to_file(&self.trace_path(id), Box::new(WallClock)).map_err(|e| ApiError::internal(e.to_string()))?;
        if req.scenario.is_multi_turn() {
            spec.shopper = Some(self.build_shopper(req.shopper, &spec)?);
        }
        let (session, obs) = Session::start(env, spec).map_err(|e| match e {
            EnvError::Shopper(_) => ApiError::bad_gateway(e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?;
        let handle = SessionHandle {
            session_id: id.to_string(),
            task_id: req.task_id,
            scenario: req.scenario,
            seed: req.seed,
            created_at: WallClock.now(),
            status: SessionStatus::Live,
        };
        let body = ObservationBody::new(obs, &session, None);
        Ok((handle, session, body))
    }

    pub fn handle(&self, id: &str) -> Result<SessionHandle, ApiError> {
        Ok(self.slot(id)?.handle.lock().expect("handle lock").clone())
    }

    /// Acquires the session for a step without waiting. A concurrent
    /// holder yields a conflict.
    pub fn begin_step(&self, id: &str) -> Result<StepGuard, ApiError> {
        let slot = self.slot(id)?;
        match slot.status() {
            SessionStatus::Expired => return Err(ApiError::gone(format!("session {id:?} expired"))),
            SessionStatus::Terminal => return Err(ApiError::conflict(format!("session {id:?} is terminal"))),
            SessionStatus::Live => {}
        }
        let guard = slot
            .session
            .clone()
            .try_lock_owned()
            .map_err(|_| ApiError::conflict(format!("session {id:?} is busy with another step")))?;
        Ok(StepGuard { slot, guard })
    }

    pub fn observation(&self, id: &str) -> Result<ObservationBody, ApiError> {
        let slot = self.slot(id)?;
        let guard = slot
            .session
            .try_lock()
            .map_err(|_| ApiError::conflict(format!("session {id:?} is busy with another step")))?;
        let session = guard.as_ref().ok_or_else(|| ApiError::gone(format!("session {id:?} expired")))?;
        Ok(ObservationBody::new(session.render(), session, None))
    }

    pub fn trace(&self, id: &str) -> Result<EpisodeTrace, ApiError> {
        let slot = self.slot(id)?;
        match slot.status() {
            SessionStatus::Live => return Err(ApiError::conflict(format!("session {id:?} is still live"))),
            SessionStatus::Expired => {
                return EpisodeTrace::load(&self.trace_path(id)).map_err(|e| ApiError::internal(e.to_string()))
            }
            SessionStatus::Terminal => {}
        }
        let guard = slot
            .session
            .try_lock()
            .map_err(|_| ApiError::conflict(format!("session {id:?} is busy with another step")))?;
        Ok(guard.as_ref().map(Session::trace).unwrap_or_default())
    }

    pub fn delete(&self, id: &str) -> Result<(), ApiError> {
        let slot = self
            .registry
            .lock()
            .expect("registry lock")
            .slots
            .remove(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))?;
        if let Ok(mut guard) = slot.session.try_lock() {
            if let Some(session) = guard.as_mut().filter(|s| !s.is_terminal()) {
                let _ = session.abort("session deleted");
            }
        }
        Ok(())
    }
}

pub struct StepGuard {
    slot: Arc<Slot>,
    guard: tokio::sync::OwnedMutexGuard<Option<Session>>,
}

impl StepGuard {
    /// Blocking: a multi-turn step may call the shopper backend.
    pub fn step(mut self, raw: &str) -> Result<ObservationBody, ApiError> {
        let session = self.guard.as_mut().ok_or_else(|| ApiError::gone("session expired".to_string()))?;
        let result = session.step(raw);
        self.slot.touch();
        let body = match result {
            Ok(StepResult { observation, error, .. }) => ObservationBody::new(observation, session, error),
            Err(e @ (EnvError::AskInSingleTurn | EnvError::Shopper(_))) => {
                if !session.is_terminal() {
                    session.abort(&e.to_string()).map_err(|e| ApiError::internal(e.to_string()))?;
                }
                ObservationBody::new(session.render(), session, Some(e.to_string()))
            }
            Err(EnvError::Terminal) => return Err(ApiError::conflict("session is terminal".to_string())),
            Err(e) => return Err(ApiError::internal(e.to_string())),
        };
        if body.terminal {
            self.slot.set_status(SessionStatus::Terminal);
        }
        Ok(body)
    }
}
