//! HTTP service over a data directory.
//!
//! Every handler reads and writes the same file stores the CLI uses, so a
//! report fetched here equals the CLI's report for the same state.

mod error;
mod labels;
mod reports;
mod runs;

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::{Json, Router};
use rubricate_core::backend::{build_backend, ChatBackend, Mode};
use rubricate_core::workspace::DataDir;
use rubricate_core::Rubric;
use tower_http::services::ServeDir;

pub use error::ApiError;

pub const DATA_DIR_ENV: &str = "RUBRICATE_DATA_DIR";

/// Shared state behind every route.
pub struct AppState {
    data: DataDir,
    backend: Arc<dyn ChatBackend>,
    backend_digest: String,
    /// Serializes label submissions so check-then-append is atomic.
    label_lock: tokio::sync::Mutex<()>,
    /// Runs currently executing in this process.
    active_runs: Mutex<HashSet<String>>,
    concurrency: usize,
}

impl AppState {
    /// State whose runs use `backend`; `backend_digest` goes into run
    /// manifests.
    pub fn new(data: DataDir, backend: Arc<dyn ChatBackend>, backend_digest: String, concurrency: usize) -> Self {
        AppState {
            data,
            backend,
            backend_digest,
            label_lock: tokio::sync::Mutex::new(()),
            active_runs: Mutex::new(HashSet::new()),
            concurrency: concurrency.max(1),
        }
    }

    /// State configured from the data directory's `backend.toml`.
    pub fn from_data_dir(data: DataDir, mode: Mode) -> Result<Self, ApiError> {
        let config = data.load_backend_config()?;
        let backend = build_backend(&config, mode, &data.cache_dir()).map_err(ApiError::internal)?;
        Ok(AppState::new(data, backend, config.digest(), config.max_concurrency))
    }

    pub fn data(&self) -> &DataDir {
        &self.data
    }
}

async fn rubric(state: axum::extract::State<Arc<AppState>>) -> Result<Json<Rubric>, ApiError> {
    Ok(Json(state.data.load_rubric()?))
}

/// The API routes, plus static files from `static_dir` at `/` when given.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/rubric", get(rubric))
        .route("/api/queue/next", get(labels::next))
        .route("/api/labels", post(labels::submit))
        .route("/api/runs", post(runs::start).get(runs::list))
        .route("/api/runs/{id}", get(runs::status))
        .route("/api/reports/agreement", get(reports::agreement))
        .route("/api/reports/disagreements", get(reports::disagreements))
        .route("/api/reports/distribution", get(reports::distribution))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data = %state.data.root().display(), "serving");
    axum::serve(listener, router(state, static_dir)).await
}
