//! Rubric-driven qualitative coding of lecture comment corpora.
//!
//! The crate is organized along the annotation pipeline:
//!
//! * [`corpus`] ingests, anonymizes and stores comments with their video context.
//! * [`rubric`] holds the declarative category set and its keyword rules.
//! * [`promptgen`] renders byte-exact prompts per category and strategy.
//! * [`backend`] is the chat-completion layer (live HTTP, mock, record/replay, throttling, cost).
//! * [`annotator`] runs resumable per-(comment, category) binary classification.
//! * [`metrics`] computes Cohen's kappa, averaged human-model agreement and distributions.
//! * [`workspace`] ties the stores together under one data directory.

pub mod annotator;
pub mod backend;
pub mod corpus;
pub mod digest;
pub mod jsonl;
pub mod metrics;
pub mod promptgen;
pub mod rubric;
pub mod workspace;

pub use annotator::{Annotation, LabelValue};
pub use corpus::{Comment, Corpus, CorpusManifest, VideoRecord};
pub use metrics::{cohen_kappa, KappaResult};
pub use promptgen::{PromptContext, RenderedPrompt, Strategy};
pub use rubric::{Category, Rubric};
