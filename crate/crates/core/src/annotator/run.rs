//! Resumable model annotation runs.
//!
//! A run lives in `runs/<run_id>/` as `manifest.json` plus an append-only
//! `annotations.jsonl`. Cells are issued in grid order (corpus order, then
//! rubric order) and written in that order, so an interrupted run that is
//! resumed produces the same file as an uninterrupted one.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::{FutureExt, StreamExt};
use serde::{Deserialize, Serialize};

use super::{apply_inversion, parse_label, Annotation, AnnotationMatrix, AnnotationStore, LabelValue};
use crate::backend::{BackendError, ChatBackend, CompletionRequest, Pricing};
use crate::corpus::Corpus;
use crate::jsonl::{self, JsonlError};
use crate::promptgen::{PromptError, PromptPlan, Strategy};
use crate::rubric::Rubric;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Paused,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub rubric_version: String,
    pub rubric_digest: String,
    pub strategy: Strategy,
    pub k: usize,
    pub prompt_digest: String,
    pub backend_digest: String,
    pub corpus_digest: String,
    pub total_cells: usize,
    pub completed_cells: usize,
    pub unparseable_cells: usize,
    pub reasked_cells: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_cost: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl RunManifest {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }

    fn digests(&self) -> [(&'static str, String); 5] {
        [
            ("strategy", format!("{}/{}", self.strategy, self.k)),
            ("rubric", self.rubric_digest.clone()),
            ("corpus", self.corpus_digest.clone()),
            ("prompts", self.prompt_digest.clone()),
            ("backend", self.backend_digest.clone()),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid run id `{0}` (use letters, digits, `.`, `_` or `-`)")]
    InvalidRunId(String),
    #[error("run `{0}` does not exist")]
    UnknownRun(String),
    #[error("comment {0} is not anonymized")]
    NotAnonymized(String),
    #[error("refusing to resume run `{run_id}`: {field} digest changed (recorded {recorded}, now {current})")]
    DigestMismatch {
        run_id: String,
        field: &'static str,
        recorded: String,
        current: String,
    },
    #[error("run manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] JsonlError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Cells in flight at once.
    pub concurrency: usize,
    /// Stop (paused) after writing this many cells in this invocation.
    pub cell_limit: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            concurrency: 4,
            cell_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: RunManifest,
    /// Cells written by this invocation.
    pub written: usize,
}

pub fn validate_run_id(run_id: &str) -> Result<(), RunError> {
    let ok = !run_id.is_empty()
        && run_id.len() <= 128
        && !run_id.starts_with('.')
        && run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(RunError::InvalidRunId(run_id.to_string()))
    }
}

pub fn run_dir(runs_dir: &Path, run_id: &str) -> PathBuf {
    runs_dir.join(run_id)
}

pub fn load_manifest(runs_dir: &Path, run_id: &str) -> Result<RunManifest, RunError> {
    validate_run_id(run_id)?;
    let path = run_dir(runs_dir, run_id).join(MANIFEST_FILE);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(RunError::UnknownRun(run_id.to_string())),
        Err(e) => return Err(JsonlError::io(&path, e).into()),
    };
    serde_json::from_str(&text).map_err(|e| RunError::BadManifest {
        path,
        message: e.to_string(),
    })
}

pub fn save_manifest(runs_dir: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    let path = run_dir(runs_dir, &manifest.run_id).join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    jsonl::write_atomic(&path, text.as_bytes())?;
    Ok(())
}

pub fn run_store(runs_dir: &Path, run_id: &str) -> AnnotationStore {
    AnnotationStore::new(&run_dir(runs_dir, run_id).join(ANNOTATIONS_FILE))
}

pub fn load_run_matrix(runs_dir: &Path, run_id: &str) -> Result<AnnotationMatrix, RunError> {
    load_manifest(runs_dir, run_id)?;
    Ok(run_store(runs_dir, run_id).load()?)
}

/// Manifests of every run under `runs_dir`, sorted by run id.
pub fn list_runs(runs_dir: &Path) -> Result<Vec<RunManifest>, RunError> {
    let entries = match std::fs::read_dir(runs_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(JsonlError::io(runs_dir, e).into()),
    };
    let mut ids: Vec<String> = entries
        .filter_map(Result::ok)
        .filter(|e| e.path().join(MANIFEST_FILE).is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|id| validate_run_id(id).is_ok())
        .collect();
    ids.sort();
    ids.iter().map(|id| load_manifest(runs_dir, id)).collect()
}

/// A run whose manifest has been checked and written, ready to execute.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    runs_dir: PathBuf,
    corpus: Arc<Corpus>,
    rubric: Arc<Rubric>,
    plan: Arc<PromptPlan>,
    pricing: Pricing,
    manifest: RunManifest,
    pending: Vec<(usize, usize)>,
}

impl PreparedRun {
    /// Validates inputs, creates or checks the manifest and works out which
    /// cells are still missing.
    pub fn prepare(
        runs_dir: &Path,
        run_id: &str,
        corpus: Arc<Corpus>,
        rubric: Arc<Rubric>,
        plan: Arc<PromptPlan>,
        backend_digest: &str,
        pricing: Pricing,
    ) -> Result<PreparedRun, RunError> {
        validate_run_id(run_id)?;
        if let Some(c) = corpus.comments().iter().find(|c| !c.is_anonymized()) {
            return Err(RunError::NotAnonymized(c.comment_id.clone()));
        }
        let total_cells = corpus.len() * rubric.len();
        let fresh = RunManifest {
            run_id: run_id.to_string(),
            rubric_version: rubric.version.clone(),
            rubric_digest: rubric.digest(),
            strategy: plan.strategy,
            k: if plan.strategy.uses_shots() { plan.k } else { 0 },
            prompt_digest: plan.digest(),
            backend_digest: backend_digest.to_string(),
            corpus_digest: corpus.digest(),
            total_cells,
            completed_cells: 0,
            unparseable_cells: 0,
            reasked_cells: 0,
            input_tokens: 0,
            output_tokens: 0,
            total_cost: 0.0,
            status: RunStatus::Running,
            message: None,
        };
        let mut manifest = match load_manifest(runs_dir, run_id) {
            Ok(existing) => {
                for ((field, recorded), (_, current)) in existing.digests().into_iter().zip(fresh.digests()) {
                    if recorded != current {
                        return Err(RunError::DigestMismatch {
                            run_id: run_id.to_string(),
                            field,
                            recorded,
                            current,
                        });
                    }
                }
                existing
            }
            Err(RunError::UnknownRun(_)) => fresh,
            Err(e) => return Err(e),
        };
        let done = run_store(runs_dir, run_id).load()?;
        let mut pending = Vec::new();
        let mut completed = 0;
        let mut unparseable = 0;
        for (ci, comment) in corpus.comments().iter().enumerate() {
            for (ki, category) in rubric.categories.iter().enumerate() {
                match done.get(&comment.comment_id, &category.key) {
                    Some(a) => {
                        completed += 1;
                        unparseable += usize::from(a.value.is_unparseable());
                    }
                    None => pending.push((ci, ki)),
                }
            }
        }
        manifest.completed_cells = completed;
        manifest.unparseable_cells = unparseable;
        manifest.total_cost = pricing.cost(manifest.input_tokens, manifest.output_tokens);
        manifest.status = if pending.is_empty() {
            RunStatus::Completed
        } else {
            RunStatus::Running
        };
        manifest.message = None;
        save_manifest(runs_dir, &manifest)?;
        Ok(PreparedRun {
            runs_dir: runs_dir.to_path_buf(),
            corpus,
            rubric,
            plan,
            pricing,
            manifest,
            pending,
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Issues the missing cells and records their annotations. Backend
    /// exhaustion pauses the run; other backend failures mark it failed.
    /// Either way the manifest says why and the run can be re-invoked.
    pub async fn execute(self, backend: Arc<dyn ChatBackend>, options: RunOptions) -> Result<RunSummary, RunError> {
        let PreparedRun {
            runs_dir,
            corpus,
            rubric,
            plan,
            pricing,
            mut manifest,
            pending,
        } = self;
        let store = run_store(&runs_dir, &manifest.run_id);
        let mut written = 0;
        if pending.is_empty() {
            manifest.status = RunStatus::Completed;
            save_manifest(&runs_dir, &manifest)?;
            return Ok(RunSummary { manifest, written });
        }
        let mut appender = store.appender()?;
        let run_id = manifest.run_id.clone();
        let limit = options.cell_limit.unwrap_or(usize::MAX);
        let cells = futures::stream::iter(pending).map(|(ci, ki)| {
            let comment = &corpus.comments()[ci];
            let category = &rubric.categories[ki];
            let backend = backend.clone();
            let plan = plan.clone();
            let context = corpus.context_for(comment);
            let run_id = run_id.clone();
            async move {
                let prompt = plan.render(&category.key, &context).map_err(CellError::Prompt)?;
                let first = backend
                    .complete(&CompletionRequest::new(prompt.text.clone()))
                    .await
                    .map_err(CellError::Backend)?;
                let mut outcome = CellOutcome {
                    input_tokens: first.input_tokens,
                    output_tokens: first.output_tokens,
                    reasked: false,
                    annotation: Annotation {
                        comment_id: comment.comment_id.clone(),
                        category_key: category.key.clone(),
                        source: run_id,
                        value: apply_inversion(category, parse_label(&first.text)),
                        raw_response: Some(first.text),
                        prompt_hash: Some(prompt.content_hash.clone()),
                    },
                };
                if outcome.annotation.value.is_unparseable() {
                    let second = backend
                        .complete(&CompletionRequest::reask(prompt.text))
                        .await
                        .map_err(CellError::Backend)?;
                    outcome.reasked = true;
                    outcome.input_tokens += second.input_tokens;
                    outcome.output_tokens += second.output_tokens;
                    outcome.annotation.value = apply_inversion(category, parse_label(&second.text));
                    outcome.annotation.raw_response = Some(second.text);
                }
                Ok::<_, CellError>(outcome)
            }
        });
        let mut cells = std::pin::pin!(cells.buffered(options.concurrency.max(1)));
        let mut stop: Option<(RunStatus, String)> = None;
        while stop.is_none() {
            let Some(first) = cells.next().await else { break };
            let mut batch = vec![first];
            while written + batch.len() < limit {
                match cells.next().now_or_never() {
                    Some(Some(r)) => batch.push(r),
                    _ => break,
                }
            }
            let mut annotations = Vec::with_capacity(batch.len());
            for result in batch {
                match result {
                    Ok(outcome) => {
                        manifest.input_tokens += outcome.input_tokens;
                        manifest.output_tokens += outcome.output_tokens;
                        manifest.reasked_cells += usize::from(outcome.reasked);
                        manifest.unparseable_cells += usize::from(outcome.annotation.value == LabelValue::Unparseable);
                        annotations.push(outcome.annotation);
                    }
                    Err(e) => {
                        stop = Some(e.into_stop());
                        break;
                    }
                }
            }
            if !annotations.is_empty() {
                appender.append_many(&annotations)?;
                written += annotations.len();
                manifest.completed_cells += annotations.len();
                manifest.total_cost = pricing.cost(manifest.input_tokens, manifest.output_tokens);
            }
            if stop.is_none() && written >= limit && manifest.completed_cells < manifest.total_cells {
                stop = Some((RunStatus::Paused, format!("stopped after {written} cells (cell limit)")));
            }
            save_manifest(&runs_dir, &manifest)?;
        }
        match stop {
            Some((status, message)) => {
                tracing::warn!(run = %manifest.run_id, %message, "run stopped");
                manifest.status = status;
                manifest.message = Some(message);
            }
            None => {
                manifest.status = RunStatus::Completed;
                manifest.message = None;
            }
        }
        save_manifest(&runs_dir, &manifest)?;
        Ok(RunSummary { manifest, written })
    }
}

struct CellOutcome {
    annotation: Annotation,
    input_tokens: u64,
    output_tokens: u64,
    reasked: bool,
}

enum CellError {
    Prompt(PromptError),
    Backend(BackendError),
}

impl CellError {
    fn into_stop(self) -> (RunStatus, String) {
        match self {
            CellError::Backend(e @ (BackendError::Retryable(_) | BackendError::FixtureMissing { .. })) => {
                (RunStatus::Paused, e.to_string())
            }
            CellError::Backend(e) => (RunStatus::Failed, e.to_string()),
            CellError::Prompt(e) => (RunStatus::Failed, e.to_string()),
        }
    }
}

/// Prepares and executes a run in one call.
#[allow(clippy::too_many_arguments)]
pub async fn annotate_corpus(
    runs_dir: &Path,
    run_id: &str,
    corpus: Arc<Corpus>,
    rubric: Arc<Rubric>,
    plan: Arc<PromptPlan>,
    backend: Arc<dyn ChatBackend>,
    backend_digest: &str,
    pricing: Pricing,
    options: RunOptions,
) -> Result<RunSummary, RunError> {
    PreparedRun::prepare(runs_dir, run_id, corpus, rubric, plan, backend_digest, pricing)?
        .execute(backend, options)
        .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, RuleFollowingResponder};
    use crate::corpus::{Comment, CorpusManifest, Playlist, VideoRecord};

    pub(crate) fn tiny_corpus(n: usize) -> Corpus {
        let manifest = CorpusManifest {
            playlists: vec![Playlist {
                playlist_id: "PL1".into(),
                playlist_name: "Linear Algebra".into(),
                comment_count: 0,
            }],
            videos: vec![VideoRecord {
                video_id: "v1".into(),
                title: "Lecture 1".into(),
                playlist_id: "PL1".into(),
                playlist_name: "Linear Algebra".into(),
                transcript_path: None,
                transcription_model: None,
            }],
        };
        let comments = (0..n)
            .map(|i| Comment {
                comment_id: format!("c{i:03}"),
                video_id: "v1".into(),
                playlist_id: "PL1".into(),
                text: if i % 3 == 0 {
                    format!("Thanks for lecture {i}")
                } else {
                    format!("Comment number {i}")
                },
            })
            .collect();
        Corpus::new(manifest, comments).unwrap()
    }

    fn pricing() -> Pricing {
        Pricing {
            per_1k_input: 0.0015,
            per_1k_output: 0.002,
        }
    }

    async fn run(
        dir: &Path,
        id: &str,
        corpus: &Corpus,
        backend: Arc<dyn ChatBackend>,
        limit: Option<usize>,
    ) -> Result<RunSummary, RunError> {
        let rubric = Rubric::sight_v1();
        let plan = PromptPlan::shipped(&rubric, Strategy::ZeroShot).unwrap();
        annotate_corpus(
            dir,
            id,
            Arc::new(corpus.clone()),
            Arc::new(rubric),
            Arc::new(plan),
            backend,
            "b",
            pricing(),
            RunOptions {
                concurrency: 3,
                cell_limit: limit,
            },
        )
        .await
    }

    fn responder() -> Arc<dyn ChatBackend> {
        Arc::new(MockBackend::following(RuleFollowingResponder::new(Rubric::sight_v1())))
    }

    #[tokio::test]
    async fn completes_full_grid() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(5);
        let s = run(dir.path(), "r1", &corpus, responder(), None).await.unwrap();
        assert_eq!(s.manifest.status, RunStatus::Completed);
        assert_eq!(s.written, 45);
        let m = load_run_matrix(dir.path(), "r1").unwrap();
        assert_eq!(m.len(), 45);
        assert_eq!(m.get("c000", "gratitude").unwrap().value, LabelValue::True);
        assert_eq!(m.get("c001", "gratitude").unwrap().value, LabelValue::False);
        // The English-only responder says "true, it is English": stored inverted.
        assert_eq!(m.get("c001", "nonenglish").unwrap().value, LabelValue::False);
        assert!(s.manifest.total_cost > 0.0);
    }

    #[tokio::test]
    async fn empty_corpus_completes_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let s = run(dir.path(), "e", &Corpus::empty(), responder(), None).await.unwrap();
        assert_eq!(s.manifest.status, RunStatus::Completed);
        assert_eq!(s.manifest.total_cells, 0);
    }

    #[tokio::test]
    async fn resume_matches_uninterrupted_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(6);
        run(a.path(), "r", &corpus, responder(), None).await.unwrap();
        let first = run(b.path(), "r", &corpus, responder(), Some(20)).await.unwrap();
        assert_eq!(first.manifest.status, RunStatus::Paused);
        assert_eq!(first.manifest.completed_cells, 20);
        let second = run(b.path(), "r", &corpus, responder(), None).await.unwrap();
        assert_eq!(second.written, 34);
        assert_eq!(second.manifest.status, RunStatus::Completed);
        let bytes = |d: &Path| std::fs::read(d.join("r").join(ANNOTATIONS_FILE)).unwrap();
        assert_eq!(bytes(a.path()), bytes(b.path()));
        let ma = load_manifest(a.path(), "r").unwrap();
        assert_eq!(ma, second.manifest);
    }

    #[tokio::test]
    async fn unparseable_gets_one_reask_then_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockBackend::constant("It could be either."));
        let s = run(dir.path(), "u", &tiny_corpus(1), mock.clone(), None).await.unwrap();
        assert_eq!(mock.calls(), 18);
        assert_eq!(s.manifest.unparseable_cells, 9);
        assert_eq!(s.manifest.reasked_cells, 9);
        assert_eq!(load_run_matrix(dir.path(), "u").unwrap().unparseable_count(), 9);
    }

    #[tokio::test]
    async fn exhaustion_pauses_and_resume_finishes() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(2);
        let failing = Arc::new(MockBackend::failing(|_| BackendError::Retryable("HTTP 429".into())));
        let s = run(dir.path(), "p", &corpus, failing, None).await.unwrap();
        assert_eq!(s.manifest.status, RunStatus::Paused);
        assert!(s.manifest.message.as_deref().unwrap().contains("429"));
        let s = run(dir.path(), "p", &corpus, responder(), None).await.unwrap();
        assert_eq!(s.manifest.status, RunStatus::Completed);
        assert_eq!(s.manifest.completed_cells, 18);
    }

    #[tokio::test]
    async fn fatal_error_fails_run() {
        let dir = tempfile::tempdir().unwrap();
        let failing = Arc::new(MockBackend::failing(|_| BackendError::Fatal("HTTP 401".into())));
        let s = run(dir.path(), "f", &tiny_corpus(1), failing, None).await.unwrap();
        assert_eq!(s.manifest.status, RunStatus::Failed);
    }

    #[tokio::test]
    async fn refuses_resume_after_corpus_change() {
        let dir = tempfile::tempdir().unwrap();
        run(dir.path(), "r", &tiny_corpus(2), responder(), Some(3))
            .await
            .unwrap();
        let err = run(dir.path(), "r", &tiny_corpus(3), responder(), None)
            .await
            .unwrap_err();
        assert!(matches!(err, RunError::DigestMismatch { field: "corpus", .. }), "{err}");
    }

    #[tokio::test]
    async fn rejects_bad_ids_and_raw_mentions() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run(dir.path(), "../x", &tiny_corpus(1), responder(), None).await,
            Err(RunError::InvalidRunId(_))
        ));
        let mut c = tiny_corpus(1).comments().to_vec();
        c[0].text = "@alice hi".into();
        let corpus = Corpus::new(tiny_corpus(1).manifest().clone(), c).unwrap();
        assert!(matches!(
            run(dir.path(), "x", &corpus, responder(), None).await,
            Err(RunError::NotAnonymized(_))
        ));
        assert!(matches!(
            load_manifest(dir.path(), "nope"),
            Err(RunError::UnknownRun(_))
        ));
    }
}
