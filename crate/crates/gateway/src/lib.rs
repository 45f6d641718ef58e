//! HTTP session service.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create; 201 with handle and first observation |
//! | GET | `/sessions/{id}` | handle with status |
//! | POST | `/sessions/{id}/step` | `{"action": "..."}` |
//! | GET | `/sessions/{id}/observation` | current page |
//! | GET | `/sessions/{id}/trace` | JSONL trace; 409 while live |
//! | DELETE | `/sessions/{id}` | |
//! | GET | `/tasks?scenario=&split=&domain=` | |
//! | GET | `/health` | readiness and version, no token needed |

pub mod api;
pub mod config;
pub mod error;
pub mod state;

use std::time::Duration;

use tokio::net::TcpListener;

pub use api::{router, VERSION};
pub use config::{ConfigError, GatewayConfig};
pub use error::ApiError;
pub use state::{GatewayState, ObservationBody, SessionHandle, SessionStatus, SharedState};

/// Builds the index in the background, sweeps idle sessions, and serves
/// until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: SharedState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let builder = state.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = builder.build_index() {
            tracing::error!("index build failed: {e}");
        }
    });
    let sweeper = state.clone();
    let period = (state.config.idle_timeout() / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    let sweep = tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let expired = sweeper.sweep();
            if expired > 0 {
                tracing::info!(expired, "expired idle sessions");
            }
        }
    });
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    sweep.abort();
    result
}
