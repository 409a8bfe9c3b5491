//! Agreement and distribution analytics over binary label vectors.
//!
//! Kappa is computed from integer contingency counts so that swapping the
//! raters or flipping both label polarities gives bit-identical results.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotator::{Annotation, LabelValue};
use crate::rubric::Rubric;

pub use report::{
    agreement_report, scatter_data, AgreementReport, CategoryAgreement, ModelAgreement, ModelRun, ScatterData,
    ScatterPoint,
};

/// Binary labels keyed by comment id.
pub type Labels = BTreeMap<String, bool>;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("label vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("label vectors cover different comments (first difference: {0})")]
    IdMismatch(String),
    #[error("kappa needs at least one pair")]
    Empty,
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("run `{run_id}` has no label for comment {comment_id} / {category}")]
    ModelCoverage {
        run_id: String,
        comment_id: String,
        category: String,
    },
    #[error("annotator `{annotator}` has no label for comment {comment_id} / {category}")]
    HumanCoverage {
        annotator: String,
        comment_id: String,
        category: String,
    },
    #[error("malformed scatter data on line {line}: {message}")]
    ScatterParse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Both true.
    pub n11: u64,
    /// First true, second false.
    pub n10: u64,
    /// First false, second true.
    pub n01: u64,
    /// Both false.
    pub n00: u64,
}

impl ContingencyTable {
    pub fn from_pairs(a: &[bool], b: &[bool]) -> Result<Self, MetricsError> {
        if a.len() != b.len() {
            return Err(MetricsError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let mut t = ContingencyTable::default();
        for (&x, &y) in a.iter().zip(b) {
            match (x, y) {
                (true, true) => t.n11 += 1,
                (true, false) => t.n10 += 1,
                (false, true) => t.n01 += 1,
                (false, false) => t.n00 += 1,
            }
        }
        Ok(t)
    }

    pub fn n(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn kappa(&self) -> Result<KappaResult, MetricsError> {
        let n = self.n();
        if n == 0 {
            return Err(MetricsError::Empty);
        }
        let (n11, n10, n01, n00) = (self.n11 as u128, self.n10 as u128, self.n01 as u128, self.n00 as u128);
        let nn = n as u128;
        let agree = n11 + n00;
        let chance = (n11 + n10) * (n11 + n01) + (n01 + n00) * (n10 + n00);
        let p_o = agree as f64 / n as f64;
        let p_e = chance as f64 / (nn * nn) as f64;
        let denominator = nn * nn - chance;
        let kappa = if denominator == 0 {
            None
        } else {
            let numerator = (agree * nn) as i128 - chance as i128;
            Some(numerator as f64 / denominator as f64)
        };
        Ok(KappaResult {
            kappa,
            p_o,
            p_e,
            n,
            table: *self,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    /// None when chance agreement is 1 and kappa is undefined.
    pub kappa: Option<f64>,
    pub p_o: f64,
    pub p_e: f64,
    pub n: u64,
    pub table: ContingencyTable,
}

/// Cohen's kappa of two equal-length binary vectors.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<KappaResult, MetricsError> {
    ContingencyTable::from_pairs(a, b)?.kappa()
}

/// Aligns keyed label vectors; all must cover the same comment ids.
/// Returns the ids in order and one vector per input.
pub fn align(vectors: &[&Labels]) -> Result<(Vec<String>, Vec<Vec<bool>>), MetricsError> {
    let Some(first) = vectors.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    for other in &vectors[1..] {
        if other.len() != first.len() {
            return Err(MetricsError::LengthMismatch {
                left: first.len(),
                right: other.len(),
            });
        }
        if let Some(id) = first
            .keys()
            .zip(other.keys())
            .find(|(a, b)| a != b)
            .map(|(a, b)| a.min(b))
        {
            return Err(MetricsError::IdMismatch(id.clone()));
        }
    }
    let ids: Vec<String> = first.keys().cloned().collect();
    let values = vectors.iter().map(|v| v.values().copied().collect()).collect();
    Ok((ids, values))
}

/// Kappa over two keyed vectors covering the same comments.
pub fn kappa_by_id(a: &Labels, b: &Labels) -> Result<KappaResult, MetricsError> {
    let (_, v) = align(&[a, b])?;
    cohen_kappa(&v[0], &v[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanModelIrr {
    pub h1: KappaResult,
    pub h2: KappaResult,
    /// Mean of the two kappas; None when either is undefined.
    pub mean: Option<f64>,
}

pub fn human_model_irr(h1: &Labels, h2: &Labels, m: &Labels) -> Result<HumanModelIrr, MetricsError> {
    let (_, v) = align(&[h1, h2, m])?;
    let k1 = cohen_kappa(&v[0], &v[2])?;
    let k2 = cohen_kappa(&v[1], &v[2])?;
    let mean = match (k1.kappa, k2.kappa) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(HumanModelIrr { h1: k1, h2: k2, mean })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementRow {
    pub comment_id: String,
    pub human_label: bool,
    pub model_label: bool,
}

/// Comments where both humans agree and the model does not, by comment id.
pub fn disagreement_report(h1: &Labels, h2: &Labels, m: &Labels) -> Result<Vec<DisagreementRow>, MetricsError> {
    let (ids, v) = align(&[h1, h2, m])?;
    Ok(ids
        .into_iter()
        .enumerate()
        .filter(|(i, _)| v[0][*i] == v[1][*i] && v[0][*i] != v[2][*i])
        .map(|(i, comment_id)| DisagreementRow {
            comment_id,
            human_label: v[0][i],
            model_label: v[2][i],
        })
        .collect())
}

/// Model labels for a category with unparseable cells read as false.
/// Returns the labels and how many cells were unparseable.
pub fn model_labels(values: &BTreeMap<String, LabelValue>) -> (Labels, usize) {
    let mut unparseable = 0;
    let labels = values
        .iter()
        .map(|(id, v)| {
            unparseable += usize::from(v.is_unparseable());
            (id.clone(), v.as_bool().unwrap_or(false))
        })
        .collect();
    (labels, unparseable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorCount {
    pub annotator: String,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub key: String,
    pub display_name: String,
    /// Comments labeled true by at least one annotator.
    pub union_count: usize,
    pub union_percentage: f64,
    pub per_annotator: Vec<AnnotatorCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub sample_size: usize,
    pub categories: Vec<CategoryDistribution>,
}

fn percentage(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 * 100.0 / total as f64
    }
}

/// Per-category label counts over a sample, per annotator and for the
/// union of annotators. Percentages are relative to `sample_size`.
pub fn distribution(
    annotations: &[Annotation],
    annotators: &[String],
    rubric: &Rubric,
    sample_size: usize,
) -> Result<DistributionReport, MetricsError> {
    let known: BTreeSet<&str> = annotations.iter().map(|a| a.source.as_str()).collect();
    if let Some(missing) = annotators
        .iter()
        .find(|a| !annotations.is_empty() && !known.contains(a.as_str()))
    {
        return Err(MetricsError::UnknownAnnotator(missing.clone()));
    }
    let wanted: BTreeSet<&str> = annotators.iter().map(String::as_str).collect();
    let mut per: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
    let mut union: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| wanted.contains(a.source.as_str())) {
        if a.value == LabelValue::True {
            per.entry((a.category_key.as_str(), a.source.as_str()))
                .or_default()
                .insert(&a.comment_id);
            union.entry(a.category_key.as_str()).or_default().insert(&a.comment_id);
        }
    }
    let categories = rubric
        .categories
        .iter()
        .map(|c| {
            let union_count = union.get(c.key.as_str()).map_or(0, BTreeSet::len);
            CategoryDistribution {
                key: c.key.clone(),
                display_name: c.display_name.clone(),
                union_count,
                union_percentage: percentage(union_count, sample_size),
                per_annotator: annotators
                    .iter()
                    .map(|who| {
                        let count = per.get(&(c.key.as_str(), who.as_str())).map_or(0, BTreeSet::len);
                        AnnotatorCount {
                            annotator: who.clone(),
                            count,
                            percentage: percentage(count, sample_size),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(DistributionReport {
        sample_size,
        categories,
    })
}

impl DistributionReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("Category distribution (sample of {} comments)\n", self.sample_size);
        let annotators: Vec<&str> = self
            .categories
            .first()
            .map(|c| c.per_annotator.iter().map(|a| a.annotator.as_str()).collect())
            .unwrap_or_default();
        out.push_str(&format!("{:<16} {:>14}", "category", "any annotator"));
        for a in &annotators {
            out.push_str(&format!(" {:>14}", a));
        }
        out.push('\n');
        for c in &self.categories {
            out.push_str(&format!(
                "{:<16} {:>14}",
                c.display_name,
                format!("{} ({:.2}%)", c.union_count, c.union_percentage)
            ));
            for a in &c.per_annotator {
                out.push_str(&format!(" {:>14}", format!("{} ({:.2}%)", a.count, a.percentage)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,annotator,count,percentage\n");
        for c in &self.categories {
            out.push_str(&format!("{},any,{},{}\n", c.key, c.union_count, c.union_percentage));
            for a in &c.per_annotator {
                out.push_str(&format!("{},{},{},{}\n", c.key, a.annotator, a.count, a.percentage));
            }
        }
        out
    }
}
