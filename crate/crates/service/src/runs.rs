//! Model run control.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::Json;
use rubricate_core::annotator::run::{validate_run_id, PreparedRun, RunManifest, RunOptions};
use rubricate_core::corpus::load_corpus;
use rubricate_core::promptgen::{PromptPlan, DEFAULT_K};
use rubricate_core::{Rubric, Strategy};
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState};

#[derive(Debug, Deserialize)]
pub struct StartRun {
    pub strategy: Strategy,
    /// Reusing an existing id resumes that run.
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    /// Corpus directory relative to the data directory.
    #[serde(default)]
    pub corpus: Option<String>,
    /// Rubric file relative to the data directory.
    #[serde(default)]
    pub rubric: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunStarted {
    pub run_id: String,
    pub manifest: RunManifest,
}

/// Resolves a client-supplied path inside the data directory.
fn inside(root: &Path, rel: &str) -> Result<PathBuf, ApiError> {
    let p = Path::new(rel);
    if p.components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(ApiError::bad_request(format!(
            "path `{rel}` must be relative to the data directory"
        )));
    }
    let full = root.join(p);
    if !full.exists() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("`{rel}` does not exist")));
    }
    Ok(full)
}

struct ActiveGuard {
    state: Arc<AppState>,
    run_id: String,
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.state
            .active_runs
            .lock()
            .expect("active runs lock")
            .remove(&self.run_id);
    }
}

pub async fn start(
    State(state): State<Arc<AppState>>,
    Json(body): Json<StartRun>,
) -> Result<(StatusCode, Json<RunStarted>), ApiError> {
    let data = &state.data;
    let run_id = match body.run_id {
        Some(id) => id,
        None => {
            let millis = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0);
            format!("{}-{millis}", body.strategy)
        }
    };
    validate_run_id(&run_id).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let rubric = match &body.rubric {
        Some(rel) => Rubric::load(&inside(data.root(), rel)?).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => data.load_rubric()?,
    };
    let corpus = match &body.corpus {
        Some(rel) => load_corpus(&inside(data.root(), rel)?).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => data.load_corpus()?,
    };
    let plan = PromptPlan::new(
        data.load_templates(&rubric)?,
        data.load_shots(&rubric)?,
        body.strategy,
        body.k.unwrap_or(DEFAULT_K),
        &rubric,
    )
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    {
        let mut active = state.active_runs.lock().expect("active runs lock");
        if !active.insert(run_id.clone()) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("run `{run_id}` is already executing"),
            ));
        }
    }
    let guard = ActiveGuard {
        state: state.clone(),
        run_id: run_id.clone(),
    };
    let config = data.load_backend_config()?;
    let prepared = PreparedRun::prepare(
        &data.runs_dir(),
        &run_id,
        Arc::new(corpus),
        Arc::new(rubric),
        Arc::new(plan),
        &state.backend_digest,
        config.pricing(),
    )
    .map_err(|e| ApiError::from(rubricate_core::workspace::WorkspaceError::from(e)))?;
    let manifest = prepared.manifest().clone();
    let backend = state.backend.clone();
    let options = RunOptions {
        concurrency: state.concurrency,
        cell_limit: None,
    };
    tokio::spawn(async move {
        let _guard = guard;
        match prepared.execute(backend, options).await {
            Ok(summary) => {
                tracing::info!(run = %summary.manifest.run_id, status = ?summary.manifest.status, "run finished")
            }
            Err(e) => tracing::error!(error = %e, "run aborted"),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(RunStarted { run_id, manifest })))
}

pub async fn status(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<RunManifest>, ApiError> {
    Ok(Json(state.data.manifest(&id)?))
}

pub async fn list(State(state): State<Arc<AppState>>) -> Result<Json<Vec<RunManifest>>, ApiError> {
    Ok(Json(state.data.runs()?))
}
