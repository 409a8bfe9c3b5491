//! Human labeling queue and label submission.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::Json;
use rubricate_core::annotator::human::validate_annotator_id;
use rubricate_core::annotator::{AnnotationMatrix, LabelValue};
use rubricate_core::{Annotation, Rubric};
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState};

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct QueueItem {
    pub comment_id: String,
    pub text: String,
    pub video_id: String,
    pub playlist_name: String,
    pub video_name: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct NextResponse {
    pub annotator: String,
    pub done: bool,
    /// Position of `comment` in the sample order.
    pub index: Option<usize>,
    pub completed: usize,
    pub total: usize,
    pub comment: Option<QueueItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub annotator: String,
    pub comment_id: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabelAck {
    pub annotator: String,
    pub comment_id: String,
    /// Selected categories in rubric order.
    pub categories: Vec<String>,
}

fn check_annotator(id: &str) -> Result<(), ApiError> {
    validate_annotator_id(id).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn is_complete(matrix: &AnnotationMatrix, rubric: &Rubric, comment_id: &str) -> bool {
    rubric.keys().all(|k| matrix.contains(comment_id, k))
}

fn selected(matrix: &AnnotationMatrix, rubric: &Rubric, comment_id: &str) -> Vec<String> {
    rubric
        .keys()
        .filter(|k| matrix.get(comment_id, k).is_some_and(|a| a.value == LabelValue::True))
        .map(str::to_string)
        .collect()
}

pub async fn next(
    State(state): State<Arc<AppState>>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextResponse>, ApiError> {
    check_annotator(&q.annotator)?;
    let rubric = state.data.load_rubric()?;
    let corpus = state.data.load_corpus()?;
    let sample = state.data.sample_ids(&corpus)?;
    let _guard = state.label_lock.lock().await;
    let matrix = state.data.load_human(&q.annotator)?;
    let completed = sample.iter().filter(|id| is_complete(&matrix, &rubric, id)).count();
    let next = sample.iter().position(|id| !is_complete(&matrix, &rubric, id));
    let comment = next.map(|i| {
        let c = corpus
            .comment(&sample[i])
            .expect("sample ids are validated against the corpus");
        let ctx = corpus.context_for(c);
        QueueItem {
            comment_id: c.comment_id.clone(),
            text: c.text.clone(),
            video_id: c.video_id.clone(),
            playlist_name: ctx.playlist_name,
            video_name: ctx.video_name,
        }
    });
    Ok(Json(NextResponse {
        annotator: q.annotator,
        done: next.is_none(),
        index: next,
        completed,
        total: sample.len(),
        comment,
    }))
}

pub async fn submit(
    State(state): State<Arc<AppState>>,
    Json(body): Json<LabelSubmission>,
) -> Result<Json<LabelAck>, ApiError> {
    check_annotator(&body.annotator)?;
    if body.categories.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "select at least one category before moving on",
        ));
    }
    let rubric = state.data.load_rubric()?;
    let chosen: BTreeSet<&str> = body.categories.iter().map(String::as_str).collect();
    if let Some(bad) = chosen.iter().find(|k| rubric.category(k).is_none()) {
        return Err(ApiError::bad_request(format!("unknown category `{bad}`")));
    }
    let corpus = state.data.load_corpus()?;
    if !state.data.sample_ids(&corpus)?.contains(&body.comment_id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("comment `{}` is not in the labeling sample", body.comment_id),
        ));
    }
    let ack = LabelAck {
        annotator: body.annotator.clone(),
        comment_id: body.comment_id.clone(),
        categories: rubric
            .keys()
            .filter(|k| chosen.contains(k))
            .map(str::to_string)
            .collect(),
    };
    let _guard = state.label_lock.lock().await;
    let matrix = state.data.load_human(&body.annotator)?;
    if is_complete(&matrix, &rubric, &body.comment_id) {
        return if selected(&matrix, &rubric, &body.comment_id) == ack.categories {
            Ok(Json(ack))
        } else {
            Err(ApiError::new(
                StatusCode::CONFLICT,
                format!(
                    "comment `{}` is already labeled differently by `{}`",
                    body.comment_id, body.annotator
                ),
            ))
        };
    }
    let rows: Vec<Annotation> = rubric
        .keys()
        .map(|k| Annotation::human(&body.comment_id, k, &body.annotator, chosen.contains(k)))
        .collect();
    state
        .data
        .human_store(&body.annotator)?
        .append(&rows)
        .map_err(ApiError::internal)?;
    Ok(Json(ack))
}
