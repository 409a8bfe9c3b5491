//! Data-directory layout shared by the CLI and the HTTP service.
//!
//! ```text
//! <data>/
//!   corpus/            manifest.json + comments.jsonl
//!   rubric.toml        optional; the shipped rubric otherwise
//!   templates/         optional <strategy>/<key>.txt overrides
//!   shots.toml         optional worked examples
//!   sample.txt         optional comment ids for human labeling, one per line
//!   backend.toml       optional backend settings
//!   humans/<id>.jsonl  human annotations
//!   runs/<id>/         model runs
//!   cache/             recorded completions
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::annotator::human::{validate_annotator_id, HumanImportError};
use crate::annotator::run::{list_runs, load_manifest, run_store, RunError, RunManifest, RunStatus};
use crate::annotator::{Annotation, AnnotationMatrix, AnnotationStore};
use crate::backend::{BackendConfig, BackendError};
use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::jsonl::JsonlError;
use crate::metrics::{
    agreement_report, disagreement_report, distribution, model_labels, AgreementReport, DistributionReport, Labels,
    MetricsError, ModelRun,
};
use crate::promptgen::{PromptError, PromptPlan, ShotLibrary, Strategy, TemplateSet};
use crate::rubric::{Rubric, RubricError};

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rubric(#[from] RubricError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Store(#[from] JsonlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Human(#[from] HumanImportError),
    #[error("the agreement report needs exactly two human annotators with imported labels, found {found}")]
    HumansRequired { found: usize },
    #[error("no completed run{}", .0.map(|s| format!(" with strategy {s}")).unwrap_or_default())]
    NoRun(Option<Strategy>),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("{path}: {message}")]
    Sample { path: PathBuf, message: String },
}

impl WorkspaceError {
    /// Errors caused by missing prerequisites rather than bad input.
    pub fn is_precondition(&self) -> bool {
        matches!(self, WorkspaceError::HumansRequired { .. } | WorkspaceError::NoRun(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDir {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementDetail {
    pub comment_id: String,
    pub text: String,
    pub human_label: bool,
    pub model_label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementList {
    pub category: String,
    pub run_id: String,
    pub strategy: Strategy,
    pub rows: Vec<DisagreementDetail>,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }
    pub fn rubric_path(&self) -> PathBuf {
        self.root.join("rubric.toml")
    }
    pub fn templates_dir(&self) -> PathBuf {
        self.root.join("templates")
    }
    pub fn shots_path(&self) -> PathBuf {
        self.root.join("shots.toml")
    }
    pub fn sample_path(&self) -> PathBuf {
        self.root.join("sample.txt")
    }
    pub fn backend_path(&self) -> PathBuf {
        self.root.join("backend.toml")
    }
    pub fn humans_dir(&self) -> PathBuf {
        self.root.join("humans")
    }
    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn human_store(&self, annotator: &str) -> Result<AnnotationStore, WorkspaceError> {
        validate_annotator_id(annotator)?;
        Ok(AnnotationStore::new(
            &self.humans_dir().join(format!("{annotator}.jsonl")),
        ))
    }

    pub fn load_rubric(&self) -> Result<Rubric, WorkspaceError> {
        let path = self.rubric_path();
        Ok(if path.exists() {
            Rubric::load(&path)?
        } else {
            Rubric::sight_v1()
        })
    }

    pub fn load_corpus(&self) -> Result<Corpus, WorkspaceError> {
        Ok(load_corpus(&self.corpus_dir())?)
    }

    pub fn load_templates(&self, rubric: &Rubric) -> Result<TemplateSet, WorkspaceError> {
        let dir = self.templates_dir();
        Ok(if dir.is_dir() {
            TemplateSet::load_dir(&dir, rubric)?
        } else {
            TemplateSet::shipped()
        })
    }

    pub fn load_shots(&self, rubric: &Rubric) -> Result<ShotLibrary, WorkspaceError> {
        let path = self.shots_path();
        Ok(if path.exists() {
            ShotLibrary::load(&path, rubric)?
        } else {
            ShotLibrary::shipped(rubric)?
        })
    }

    pub fn prompt_plan(&self, rubric: &Rubric, strategy: Strategy, k: usize) -> Result<PromptPlan, WorkspaceError> {
        Ok(PromptPlan::new(
            self.load_templates(rubric)?,
            self.load_shots(rubric)?,
            strategy,
            k,
            rubric,
        )?)
    }

    pub fn load_backend_config(&self) -> Result<BackendConfig, WorkspaceError> {
        let path = self.backend_path();
        Ok(if path.exists() {
            BackendConfig::load(&path)?
        } else {
            BackendConfig::default()
        })
    }

    /// Comment ids in labeling order: `sample.txt` when present, else the
    /// whole corpus in corpus order.
    pub fn sample_ids(&self, corpus: &Corpus) -> Result<Vec<String>, WorkspaceError> {
        let path = self.sample_path();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Ok(corpus.comments().iter().map(|c| c.comment_id.clone()).collect())
            }
            Err(e) => return Err(JsonlError::io(&path, e).into()),
        };
        let mut seen = BTreeSet::new();
        let mut ids = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let id = line.trim();
            if id.is_empty() || id.starts_with('#') {
                continue;
            }
            let problem = if corpus.comment(id).is_none() {
                Some("unknown comment")
            } else if !seen.insert(id.to_string()) {
                Some("duplicate comment")
            } else {
                None
            };
            if let Some(p) = problem {
                return Err(WorkspaceError::Sample {
                    path,
                    message: format!("line {}: {p} `{id}`", i + 1),
                });
            }
            ids.push(id.to_string());
        }
        Ok(ids)
    }

    /// Annotators with a label file, sorted by id.
    pub fn human_ids(&self) -> Result<Vec<String>, WorkspaceError> {
        let dir = self.humans_dir();
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(JsonlError::io(&dir, e).into()),
        };
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name.strip_suffix(".jsonl")?;
                validate_annotator_id(id).ok()?;
                Some(id.to_string())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn load_human(&self, annotator: &str) -> Result<AnnotationMatrix, WorkspaceError> {
        Ok(self.human_store(annotator)?.load()?)
    }

    /// Replaces an annotator's labels.
    pub fn save_human(&self, annotator: &str, annotations: &[Annotation]) -> Result<(), WorkspaceError> {
        Ok(self.human_store(annotator)?.replace(annotations)?)
    }

    pub fn runs(&self) -> Result<Vec<RunManifest>, WorkspaceError> {
        Ok(list_runs(&self.runs_dir())?)
    }

    pub fn manifest(&self, run_id: &str) -> Result<RunManifest, WorkspaceError> {
        Ok(load_manifest(&self.runs_dir(), run_id)?)
    }

    pub fn run_matrix(&self, run_id: &str) -> Result<AnnotationMatrix, WorkspaceError> {
        load_manifest(&self.runs_dir(), run_id)?;
        Ok(run_store(&self.runs_dir(), run_id).load()?)
    }

    /// The two stored annotators with non-empty label sets, by id.
    pub fn two_humans(&self) -> Result<[(String, AnnotationMatrix); 2], WorkspaceError> {
        let ids = self.human_ids()?;
        let mut loaded = Vec::new();
        for id in ids {
            let m = self.load_human(&id)?;
            if !m.is_empty() {
                loaded.push((id, m));
            }
        }
        let found = loaded.len();
        <[(String, AnnotationMatrix); 2]>::try_from(loaded).map_err(|_| WorkspaceError::HumansRequired { found })
    }

    /// Agreement over the named runs, or every completed run when `runs`
    /// is None. Both the CLI and the service produce reports through here.
    pub fn agreement_report(&self, runs: Option<&[String]>) -> Result<AgreementReport, WorkspaceError> {
        let rubric = self.load_rubric()?;
        let [h1, h2] = self.two_humans()?;
        let manifests: Vec<RunManifest> = match runs {
            Some(ids) => ids.iter().map(|id| self.manifest(id)).collect::<Result<_, _>>()?,
            None => self
                .runs()?
                .into_iter()
                .filter(|m| m.status == RunStatus::Completed)
                .collect(),
        };
        let matrices: Vec<AnnotationMatrix> = manifests
            .iter()
            .map(|m| self.run_matrix(&m.run_id))
            .collect::<Result<_, _>>()?;
        let model_runs: Vec<ModelRun<'_>> = manifests
            .iter()
            .zip(&matrices)
            .map(|(m, matrix)| ModelRun {
                run_id: &m.run_id,
                strategy: m.strategy,
                k: if m.k == 0 { crate::promptgen::DEFAULT_K } else { m.k },
                matrix,
            })
            .collect();
        Ok(agreement_report(&rubric, (&h1.0, &h1.1), (&h2.0, &h2.1), &model_runs)?)
    }

    /// Category counts over every comment any human has labeled.
    pub fn distribution(&self) -> Result<DistributionReport, WorkspaceError> {
        let rubric = self.load_rubric()?;
        let humans = self.human_ids()?;
        let mut annotations = Vec::new();
        let mut sample = BTreeSet::new();
        for id in &humans {
            let m = self.load_human(id)?;
            sample.extend(m.comment_ids());
            annotations.extend(m.iter().cloned());
        }
        Ok(distribution(&annotations, &humans, &rubric, sample.len())?)
    }

    /// Resolves a run for disagreement review: `run_id` when given, else
    /// the first completed run (by id) with `strategy`, else the first
    /// completed run.
    pub fn resolve_run(&self, run_id: Option<&str>, strategy: Option<Strategy>) -> Result<RunManifest, WorkspaceError> {
        if let Some(id) = run_id {
            return self.manifest(id);
        }
        self.runs()?
            .into_iter()
            .filter(|m| m.status == RunStatus::Completed)
            .find(|m| strategy.is_none_or(|s| m.strategy == s))
            .ok_or(WorkspaceError::NoRun(strategy))
    }

    /// Comments where both humans agree and the run disagrees, by id.
    pub fn disagreements(
        &self,
        category: &str,
        run_id: Option<&str>,
        strategy: Option<Strategy>,
    ) -> Result<DisagreementList, WorkspaceError> {
        let rubric = self.load_rubric()?;
        if rubric.category(category).is_none() {
            return Err(WorkspaceError::UnknownCategory(category.to_string()));
        }
        let [h1, h2] = self.two_humans()?;
        let manifest = self.resolve_run(run_id, strategy)?;
        let matrix = self.run_matrix(&manifest.run_id)?;
        let sample: Vec<String> = h1.1.comment_ids().intersection(&h2.1.comment_ids()).cloned().collect();
        let pick = |m: &AnnotationMatrix, who: &str| -> Result<Labels, WorkspaceError> {
            sample
                .iter()
                .map(|id| {
                    m.get(id, category)
                        .and_then(|a| a.value.as_bool())
                        .map(|v| (id.clone(), v))
                        .ok_or_else(|| {
                            MetricsError::HumanCoverage {
                                annotator: who.to_string(),
                                comment_id: id.clone(),
                                category: category.to_string(),
                            }
                            .into()
                        })
                })
                .collect()
        };
        let l1 = pick(&h1.1, &h1.0)?;
        let l2 = pick(&h2.1, &h2.0)?;
        let values = matrix.category_values(category);
        let mut covered = std::collections::BTreeMap::new();
        for id in &sample {
            let v = values.get(id).ok_or_else(|| MetricsError::ModelCoverage {
                run_id: manifest.run_id.clone(),
                comment_id: id.clone(),
                category: category.to_string(),
            })?;
            covered.insert(id.clone(), *v);
        }
        let (m, _) = model_labels(&covered);
        let corpus = self.load_corpus().ok();
        let rows = disagreement_report(&l1, &l2, &m)?
            .into_iter()
            .map(|r| DisagreementDetail {
                text: corpus
                    .as_ref()
                    .and_then(|c| c.comment(&r.comment_id))
                    .map(|c| c.text.clone())
                    .unwrap_or_default(),
                comment_id: r.comment_id,
                human_label: r.human_label,
                model_label: r.model_label,
            })
            .collect();
        Ok(DisagreementList {
            category: category.to_string(),
            run_id: manifest.run_id,
            strategy: manifest.strategy,
            rows,
        })
    }

    /// Everything a run needs, loaded from this directory.
    pub fn run_inputs(&self, strategy: Strategy, k: usize) -> Result<RunInputs, WorkspaceError> {
        let rubric = self.load_rubric()?;
        let plan = self.prompt_plan(&rubric, strategy, k)?;
        Ok(RunInputs {
            corpus: Arc::new(self.load_corpus()?),
            rubric: Arc::new(rubric),
            plan: Arc::new(plan),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunInputs {
    pub corpus: Arc<Corpus>,
    pub rubric: Arc<Rubric>,
    pub plan: Arc<PromptPlan>,
}
