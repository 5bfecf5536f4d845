//! HTTP API for interactive annotation sessions.
//!
//! Every route lives under `/api/v1`. Each session carries a revision
//! number that increases with every mutation; mutating requests must echo
//! the revision they were based on and are refused with `409 Conflict`
//! otherwise. Retraining after a label submission runs on a blocking worker
//! while the session refuses further mutations.

pub mod config;
pub mod error;
mod routes;
mod sessions;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::Router;

pub use config::ServiceConfig;
pub use error::{ApiError, ApiResult};
pub use sessions::AppState;

pub const API_PREFIX: &str = "/api/v1";

/// Builds the application router over an already loaded state.
pub fn router(state: Arc<AppState>) -> Router {
    let api = routes::routes().layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new().nest(API_PREFIX, api).with_state(state)
}

/// Loads persisted sessions from the configured directory and builds the router.
pub fn app(config: ServiceConfig) -> annoloop::Result<Router> {
    Ok(router(Arc::new(AppState::load(config)?)))
}

async fn auth(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let given = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(request).await
}

/// Serves until the process is interrupted.
pub async fn serve(config: ServiceConfig) -> annoloop::Result<()> {
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|e| annoloop::Error::Config(format!("bad listen address: {e}")))?;
    let app = app(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| annoloop::Error::Config(format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on http://{addr}{API_PREFIX}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| annoloop::Error::Config(format!("server error: {e}")))
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(config: ServiceConfig) -> annoloop::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| annoloop::Error::Config(format!("cannot start runtime: {e}")))?;
    runtime.block_on(serve(config))
}
