//! Labels, label parsing, annotation stores, model runs and human imports.

pub mod human;
pub mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, Appender, JsonlError};
use crate::rubric::Category;

pub use human::{import_human_annotations, parse_human_file, HumanImportError, HumanRow};
pub use run::{annotate_corpus, PreparedRun, RunError, RunManifest, RunOptions, RunStatus, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelValue {
    True,
    False,
    Unparseable,
}

impl LabelValue {
    pub fn from_bool(b: bool) -> Self {
        if b {
            LabelValue::True
        } else {
            LabelValue::False
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            LabelValue::True => Some(true),
            LabelValue::False => Some(false),
            LabelValue::Unparseable => None,
        }
    }

    pub fn is_unparseable(self) -> bool {
        self == LabelValue::Unparseable
    }
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelValue::True => "true",
            LabelValue::False => "false",
            LabelValue::Unparseable => "unparseable",
        })
    }
}

/// Word at the start of `s` after skipping whitespace and light markup
/// (quotes, asterisks, brackets).
fn leading_word(s: &str) -> &str {
    let s = s.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '*' | '`' | '[' | '(' | '“'));
    let end = s.find(|c: char| !c.is_alphabetic()).unwrap_or(s.len());
    &s[..end]
}

fn decide(word: &str) -> Option<LabelValue> {
    if word.eq_ignore_ascii_case("true") {
        Some(LabelValue::True)
    } else if word.eq_ignore_ascii_case("false") {
        Some(LabelValue::False)
    } else {
        None
    }
}

/// Extracts a label from a model response.
///
/// When the text has a `Label:` marker (any case), the word after the last
/// marker decides, and anything other than `true`/`false` there is
/// unparseable. Otherwise the last standalone `true` or `false` word
/// decides. No decision is never guessed.
pub fn parse_label(response: &str) -> LabelValue {
    let lower = response.to_ascii_lowercase();
    if let Some(at) = lower.rfind("label:") {
        return decide(leading_word(&response[at + "label:".len()..])).unwrap_or(LabelValue::Unparseable);
    }
    response
        .split(|c: char| !c.is_alphabetic())
        .rev()
        .find_map(decide)
        .unwrap_or(LabelValue::Unparseable)
}

/// Flips true and false for categories whose prompt asks the inverse
/// question. Unparseable stays unparseable.
pub fn apply_inversion(category: &Category, value: LabelValue) -> LabelValue {
    if !category.invert_label {
        return value;
    }
    match value {
        LabelValue::True => LabelValue::False,
        LabelValue::False => LabelValue::True,
        LabelValue::Unparseable => LabelValue::Unparseable,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub comment_id: String,
    pub category_key: String,
    /// Human annotator id or model run id.
    pub source: String,
    pub value: LabelValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
}

impl Annotation {
    pub fn human(comment_id: &str, category_key: &str, annotator: &str, value: bool) -> Self {
        Annotation {
            comment_id: comment_id.to_string(),
            category_key: category_key.to_string(),
            source: annotator.to_string(),
            value: LabelValue::from_bool(value),
            raw_response: None,
            prompt_hash: None,
        }
    }

    pub fn cell(&self) -> (String, String) {
        (self.comment_id.clone(), self.category_key.clone())
    }
}

/// One source's labels keyed by (comment_id, category_key).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationMatrix {
    cells: BTreeMap<(String, String), Annotation>,
}

impl AnnotationMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a matrix with last-write-wins per cell.
    pub fn from_annotations(annotations: impl IntoIterator<Item = Annotation>) -> Self {
        let mut m = AnnotationMatrix::new();
        for a in annotations {
            m.insert(a);
        }
        m
    }

    pub fn insert(&mut self, annotation: Annotation) -> Option<Annotation> {
        self.cells.insert(annotation.cell(), annotation)
    }

    pub fn get(&self, comment_id: &str, category_key: &str) -> Option<&Annotation> {
        self.cells.get(&(comment_id.to_string(), category_key.to_string()))
    }

    pub fn contains(&self, comment_id: &str, category_key: &str) -> bool {
        self.get(comment_id, category_key).is_some()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.cells.values()
    }

    pub fn comment_ids(&self) -> std::collections::BTreeSet<String> {
        self.cells.keys().map(|(c, _)| c.clone()).collect()
    }

    /// Labels of one category keyed by comment id, unparseable kept as None.
    pub fn category_values(&self, category_key: &str) -> BTreeMap<String, LabelValue> {
        self.cells
            .iter()
            .filter(|((_, k), _)| k == category_key)
            .map(|((c, _), a)| (c.clone(), a.value))
            .collect()
    }

    pub fn unparseable_count(&self) -> usize {
        self.cells.values().filter(|a| a.value.is_unparseable()).count()
    }

    /// Canonical bytes: cells in (comment, category) order, one JSON line
    /// each, with the source omitted so runs can be compared across ids.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Cell<'a> {
            comment_id: &'a str,
            category_key: &'a str,
            value: LabelValue,
            raw_response: &'a Option<String>,
            prompt_hash: &'a Option<String>,
        }
        let mut out = String::new();
        for a in self.cells.values() {
            out.push_str(&jsonl::to_line(&Cell {
                comment_id: &a.comment_id,
                category_key: &a.category_key,
                value: a.value,
                raw_response: &a.raw_response,
                prompt_hash: &a.prompt_hash,
            }));
        }
        out.into_bytes()
    }
}

/// Append-only annotation file with last-write-wins at load.
#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
}

impl AnnotationStore {
    pub fn new(path: &Path) -> Self {
        AnnotationStore {
            path: path.to_path_buf(),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn exists(&self) -> bool {
        self.path.exists()
    }

    pub fn load(&self) -> Result<AnnotationMatrix, JsonlError> {
        Ok(AnnotationMatrix::from_annotations(jsonl::read_all_or_empty::<
            Annotation,
        >(&self.path)?))
    }

    pub fn appender(&self) -> Result<Appender, JsonlError> {
        Appender::open(&self.path)
    }

    pub fn append(&self, annotations: &[Annotation]) -> Result<(), JsonlError> {
        self.appender()?.append_many(annotations)
    }

    pub fn replace(&self, annotations: &[Annotation]) -> Result<(), JsonlError> {
        jsonl::write_all(&self.path, annotations)
    }
}
