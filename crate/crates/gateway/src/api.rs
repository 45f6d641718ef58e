use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use shopsim_core::tasks::{Scenario, Split, Task};

use crate::error::ApiError;
use crate::state::{CreateRequest, ObservationBody, SessionHandle, SharedState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn router(state: SharedState) -> Router {
    let protected = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/observation", get(get_observation))
        .route("/sessions/{id}/trace", get(get_trace))
        .route("/tasks", get(list_tasks))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/health", get(health)).merge(protected).with_state(state)
}

async fn require_token(State(state): State<SharedState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(req).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<SharedState>) -> Response {
    let ready = state.is_ready();
    let body = json!({
        "status": if ready { "ready" } else { "starting" },
        "version": VERSION,
        "catalog": state.catalog().manifest().name,
        "products": state.catalog().len(),
        "tasks": state.tasks().len(),
        "live_sessions": state.live_sessions(),
    });
    let status = if ready { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (status, Json(body)).into_response()
}

async fn create_session(
    State(state): State<SharedState>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let (handle, observation) = blocking(move || state.create(req)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session": handle, "observation": observation }))))
}

async fn get_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<Json<SessionHandle>, ApiError> {
    state.handle(&id).map(Json)
}

#[derive(Debug, Deserialize)]
struct StepRequest {
    action: String,
}

async fn step_session(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Json(req): Json<StepRequest>,
) -> Result<Json<ObservationBody>, ApiError> {
    let guard = state.begin_step(&id)?;
    blocking(move || guard.step(&req.action)).await.map(Json)
}

async fn get_observation(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<ObservationBody>, ApiError> {
    state.observation(&id).map(Json)
}

async fn get_trace(State(state): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let trace = state.trace(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], trace.to_jsonl()).into_response())
}

async fn delete_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
struct TaskFilter {
    scenario: Option<Scenario>,
    split: Option<Split>,
    domain: Option<String>,
}

impl TaskFilter {
    fn keeps(&self, t: &Task) -> bool {
        self.scenario.is_none_or(|s| t.supports(s))
            && self.split.is_none_or(|s| t.split == s)
            && self.domain.as_deref().is_none_or(|d| t.domain().eq_ignore_ascii_case(d))
    }
}

async fn list_tasks(State(state): State<SharedState>, Query(filter): Query<TaskFilter>) -> Json<serde_json::Value> {
    let tasks: Vec<&Task> = state.tasks().tasks.iter().filter(|t| filter.keeps(t)).collect();
    Json(json!({ "count": tasks.len(), "tasks": tasks }))
}
