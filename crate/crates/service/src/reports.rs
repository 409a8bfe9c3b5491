//! Report endpoints.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::Json;
use rubricate_core::metrics::{AgreementReport, DistributionReport};
use rubricate_core::workspace::DisagreementList;
use rubricate_core::Strategy;
use serde::Deserialize;

use crate::{ApiError, AppState};

#[derive(Debug, Deserialize)]
pub struct AgreementQuery {
    /// Comma-separated run ids; every completed run when absent.
    #[serde(default)]
    pub runs: Option<String>,
}

pub async fn agreement(
    State(state): State<Arc<AppState>>,
    Query(q): Query<AgreementQuery>,
) -> Result<Json<AgreementReport>, ApiError> {
    let runs: Option<Vec<String>> = q.runs.map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    });
    Ok(Json(state.data.agreement_report(runs.as_deref())?))
}

#[derive(Debug, Deserialize)]
pub struct DisagreementQuery {
    pub category: String,
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub run: Option<String>,
}

pub async fn disagreements(
    State(state): State<Arc<AppState>>,
    Query(q): Query<DisagreementQuery>,
) -> Result<Json<DisagreementList>, ApiError> {
    let strategy = q
        .strategy
        .as_deref()
        .map(str::parse::<Strategy>)
        .transpose()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(state.data.disagreements(
        &q.category,
        q.run.as_deref(),
        strategy,
    )?))
}

pub async fn distribution(State(state): State<Arc<AppState>>) -> Result<Json<DistributionReport>, ApiError> {
    Ok(Json(state.data.distribution()?))
}
