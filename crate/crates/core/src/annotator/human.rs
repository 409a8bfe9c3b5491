//! Import of human labels from `comment_id: key[, key...]` files.
//!
//! Each row lists the categories an annotator selected for one comment.
//! Categories not listed are stored as false for that annotator. Blank
//! lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::Annotation;
use crate::rubric::Rubric;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HumanRow {
    pub comment_id: String,
    pub keys: BTreeSet<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum HumanImportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `comment_id: key[, key...]`")]
    Syntax { line: usize },
    #[error("line {line}: comment `{comment_id}` selects no category")]
    NoCategories { line: usize, comment_id: String },
    #[error("line {line}: unknown category `{key}`")]
    UnknownCategory { line: usize, key: String },
    #[error("line {line}: unknown comment `{comment_id}`")]
    UnknownComment { line: usize, comment_id: String },
    #[error("line {line}: category `{key}` listed twice for comment `{comment_id}`")]
    Duplicate {
        line: usize,
        comment_id: String,
        key: String,
    },
    #[error("invalid annotator id `{0}`")]
    InvalidAnnotator(String),
}

/// Parses rows, checking keys against the rubric and, when given, comment
/// ids against `known_comments`. Rows for one comment spread over several
/// lines are merged; rows come back in order of first appearance.
pub fn parse_human_file(
    text: &str,
    rubric: &Rubric,
    known_comments: Option<&BTreeSet<String>>,
) -> Result<Vec<HumanRow>, HumanImportError> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (id, keys) = trimmed.split_once(':').ok_or(HumanImportError::Syntax { line })?;
        let comment_id = id.trim().to_string();
        if comment_id.is_empty() || comment_id.contains(char::is_whitespace) {
            return Err(HumanImportError::Syntax { line });
        }
        if let Some(known) = known_comments {
            if !known.contains(&comment_id) {
                return Err(HumanImportError::UnknownComment { line, comment_id });
            }
        }
        let keys: Vec<&str> = keys.split(',').map(str::trim).filter(|k| !k.is_empty()).collect();
        if keys.is_empty() {
            return Err(HumanImportError::NoCategories { line, comment_id });
        }
        if !rows.contains_key(&comment_id) {
            order.push(comment_id.clone());
        }
        let selected = rows.entry(comment_id.clone()).or_default();
        for key in keys {
            if rubric.category(key).is_none() {
                return Err(HumanImportError::UnknownCategory {
                    line,
                    key: key.to_string(),
                });
            }
            if !selected.insert(key.to_string()) {
                return Err(HumanImportError::Duplicate {
                    line,
                    comment_id,
                    key: key.to_string(),
                });
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|comment_id| {
            let keys = rows.remove(&comment_id).expect("every ordered id has a row");
            HumanRow { comment_id, keys }
        })
        .collect())
}

/// One annotation per (row, category): true when selected, false otherwise.
pub fn rows_to_annotations(rows: &[HumanRow], rubric: &Rubric, annotator_id: &str) -> Vec<Annotation> {
    rows.iter()
        .flat_map(|row| {
            rubric
                .keys()
                .map(|key| Annotation::human(&row.comment_id, key, annotator_id, row.keys.contains(key)))
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn validate_annotator_id(id: &str) -> Result<(), HumanImportError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(HumanImportError::InvalidAnnotator(id.to_string()))
    }
}

/// Reads a human label file and expands it to a full per-category grid.
pub fn import_human_annotations(
    path: &Path,
    annotator_id: &str,
    rubric: &Rubric,
    known_comments: Option<&BTreeSet<String>>,
) -> Result<Vec<Annotation>, HumanImportError> {
    validate_annotator_id(annotator_id)?;
    let text = std::fs::read_to_string(path).map_err(|source| HumanImportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows = parse_human_file(&text, rubric, known_comments)?;
    Ok(rows_to_annotations(&rows, rubric, annotator_id))
}

/// Renders rows in the import format.
pub fn format_human_file(rows: &[HumanRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.comment_id);
        out.push_str(": ");
        out.push_str(&row.keys.iter().map(String::as_str).collect::<Vec<_>>().join(", "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::LabelValue;

    #[test]
    fn row_expands_to_full_grid() {
        let rubric = Rubric::sight_v1();
        let rows = parse_human_file("c1: general, gratitude\n", &rubric, None).unwrap();
        let anns = rows_to_annotations(&rows, &rubric, "h1");
        assert_eq!(anns.len(), 9);
        assert_eq!(anns.iter().filter(|a| a.value == LabelValue::True).count(), 2);
        assert_eq!(anns.iter().filter(|a| a.value == LabelValue::False).count(), 7);
        assert!(anns.iter().all(|a| a.source == "h1" && a.raw_response.is_none()));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let rubric = Rubric::sight_v1();
        let err = parse_human_file("c1: general\nc2: styles\n", &rubric, None).unwrap_err();
        assert!(matches!(err, HumanImportError::UnknownCategory { line: 2, ref key } if key == "styles"));
        let err = parse_human_file("c1 general", &rubric, None).unwrap_err();
        assert!(matches!(err, HumanImportError::Syntax { line: 1 }));
        let err = parse_human_file("c1: general\nc1: general", &rubric, None).unwrap_err();
        assert!(matches!(err, HumanImportError::Duplicate { line: 2, .. }));
        let err = parse_human_file("c1:  ,", &rubric, None).unwrap_err();
        assert!(matches!(err, HumanImportError::NoCategories { .. }));
        let known: BTreeSet<String> = ["c1".to_string()].into();
        let err = parse_human_file("c9: na", &rubric, Some(&known)).unwrap_err();
        assert!(matches!(err, HumanImportError::UnknownComment { .. }));
    }

    #[test]
    fn split_rows_merge_and_comments_are_skipped() {
        let rubric = Rubric::sight_v1();
        let rows = parse_human_file("# header\n\nc2: na\nc1: general\nc2: pedagogy\n", &rubric, None).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].comment_id, "c2");
        assert_eq!(rows[0].keys.len(), 2);
        let back = parse_human_file(&format_human_file(&rows), &rubric, None).unwrap();
        assert_eq!(back, rows);
    }
}
