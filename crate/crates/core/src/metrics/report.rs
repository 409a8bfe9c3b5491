//! Per-category agreement tables and scatter data.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{cohen_kappa, human_model_irr, model_labels, KappaResult, Labels, MetricsError};
use crate::annotator::AnnotationMatrix;
use crate::promptgen::Strategy;
use crate::rubric::Rubric;

/// A model run's labels as input to [`agreement_report`].
#[derive(Debug, Clone)]
pub struct ModelRun<'a> {
    pub run_id: &'a str,
    pub strategy: Strategy,
    pub k: usize,
    pub matrix: &'a AnnotationMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAgreement {
    pub run_id: String,
    pub strategy: Strategy,
    /// Table row label such as `0-shot` or `3-shot-R`.
    pub label: String,
    pub h1: KappaResult,
    pub h2: KappaResult,
    /// Averaged human-model kappa; None when either side is undefined.
    pub mean: Option<f64>,
    /// Cells read as false because the response was unparseable.
    pub unparseable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAgreement {
    pub key: String,
    pub abbrev: String,
    pub human: KappaResult,
    pub models: Vec<ModelAgreement>,
    /// Run id with the highest averaged human-model kappa.
    pub best_run: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rubric_version: String,
    pub humans: [String; 2],
    pub sample_size: usize,
    pub categories: Vec<CategoryAgreement>,
}

fn human_labels(matrix: &AnnotationMatrix, who: &str, sample: &[String], key: &str) -> Result<Labels, MetricsError> {
    sample
        .iter()
        .map(|id| match matrix.get(id, key).and_then(|a| a.value.as_bool()) {
            Some(v) => Ok((id.clone(), v)),
            None => Err(MetricsError::HumanCoverage {
                annotator: who.to_string(),
                comment_id: id.clone(),
                category: key.to_string(),
            }),
        })
        .collect()
}

/// Builds the agreement report over the comments both humans labeled.
/// Every run must label every sampled comment.
pub fn agreement_report(
    rubric: &Rubric,
    h1: (&str, &AnnotationMatrix),
    h2: (&str, &AnnotationMatrix),
    runs: &[ModelRun<'_>],
) -> Result<AgreementReport, MetricsError> {
    let both: BTreeSet<String> = h1.1.comment_ids().intersection(&h2.1.comment_ids()).cloned().collect();
    let sample: Vec<String> = both.into_iter().collect();
    let mut runs: Vec<&ModelRun<'_>> = runs.iter().collect();
    runs.sort_by(|a, b| (a.strategy, a.run_id).cmp(&(b.strategy, b.run_id)));
    let mut categories = Vec::with_capacity(rubric.len());
    for category in &rubric.categories {
        let key = category.key.as_str();
        let l1 = human_labels(h1.1, h1.0, &sample, key)?;
        let l2 = human_labels(h2.1, h2.0, &sample, key)?;
        let v1: Vec<bool> = l1.values().copied().collect();
        let v2: Vec<bool> = l2.values().copied().collect();
        let human = cohen_kappa(&v1, &v2)?;
        let mut models = Vec::with_capacity(runs.len());
        for run in &runs {
            let values = run.matrix.category_values(key);
            let mut covered = std::collections::BTreeMap::new();
            for id in &sample {
                let v = values.get(id).ok_or_else(|| MetricsError::ModelCoverage {
                    run_id: run.run_id.to_string(),
                    comment_id: id.clone(),
                    category: key.to_string(),
                })?;
                covered.insert(id.clone(), *v);
            }
            let (m, unparseable) = model_labels(&covered);
            let irr = human_model_irr(&l1, &l2, &m)?;
            models.push(ModelAgreement {
                run_id: run.run_id.to_string(),
                strategy: run.strategy,
                label: run.strategy.table_label(run.k),
                h1: irr.h1,
                h2: irr.h2,
                mean: irr.mean,
                unparseable,
            });
        }
        let best_run = models
            .iter()
            .filter_map(|m| m.mean.map(|k| (k, &m.run_id)))
            .fold(None::<(f64, &String)>, |best, (k, id)| match best {
                Some((b, _)) if b >= k => best,
                _ => Some((k, id)),
            })
            .map(|(_, id)| id.clone());
        categories.push(CategoryAgreement {
            key: key.to_string(),
            abbrev: category.abbrev().to_string(),
            human,
            models,
            best_run,
        });
    }
    Ok(AgreementReport {
        rubric_version: rubric.version.clone(),
        humans: [h1.0.to_string(), h2.0.to_string()],
        sample_size: sample.len(),
        categories,
    })
}

fn cell(k: Option<f64>) -> String {
    k.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

fn csv_num(k: Option<f64>) -> String {
    k.map_or_else(String::new, |v| v.to_string())
}

impl AgreementReport {
    fn row_keys(&self) -> Vec<(String, String)> {
        self.categories
            .first()
            .map(|c| c.models.iter().map(|m| (m.run_id.clone(), m.label.clone())).collect())
            .unwrap_or_default()
    }

    /// Aligned text table: one column per category in rubric order, a
    /// `human` row and one row per model run. `*` marks the best run.
    pub fn to_table(&self) -> String {
        let rows = self.row_keys();
        let label_width = rows
            .iter()
            .map(|(id, label)| label.len() + id.len() + 3)
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Cohen's kappa, n = {} comments labeled by {} and {}",
            self.sample_size, self.humans[0], self.humans[1]
        );
        let _ = write!(out, "{:<label_width$}", "");
        for c in &self.categories {
            let _ = write!(out, " {:>7}", c.abbrev);
        }
        out.push('\n');
        let _ = write!(out, "{:<label_width$}", "human");
        for c in &self.categories {
            let _ = write!(out, " {:>7}", cell(c.human.kappa));
        }
        out.push('\n');
        for (i, (run_id, label)) in rows.iter().enumerate() {
            let _ = write!(out, "{:<label_width$}", format!("{label} ({run_id})"));
            for c in &self.categories {
                let m = &c.models[i];
                let mark = if c.best_run.as_deref() == Some(run_id.as_str()) && rows.len() > 1 {
                    "*"
                } else {
                    " "
                };
                let _ = write!(out, " {:>6}{mark}", cell(m.mean));
            }
            out.push('\n');
        }
        if !rows.is_empty() {
            out.push_str("model rows: mean of kappa(human 1, model) and kappa(human 2, model)");
            if rows.len() > 1 {
                out.push_str("; * best run per category");
            }
            out.push('\n');
            for (i, (run_id, _)) in rows.iter().enumerate() {
                let total: usize = self.categories.iter().map(|c| c.models[i].unparseable).sum();
                if total > 0 {
                    let _ = writeln!(out, "run {run_id}: {total} unparseable labels counted as false");
                }
            }
        }
        out
    }

    /// Long-form CSV, one line per (category, row).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,row,run_id,kappa,kappa_h1,kappa_h2,n,unparseable,best\n");
        for c in &self.categories {
            let _ = writeln!(out, "{},human,,{},,,{},0,", c.key, csv_num(c.human.kappa), c.human.n);
            for m in &c.models {
                let best = c.best_run.as_deref() == Some(m.run_id.as_str());
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    c.key,
                    m.label,
                    m.run_id,
                    csv_num(m.mean),
                    csv_num(m.h1.kappa),
                    csv_num(m.h2.kappa),
                    m.h1.n,
                    m.unparseable,
                    best
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub category: String,
    pub human_irr: f64,
    pub human_model_irr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterData {
    pub run_id: String,
    pub points: Vec<ScatterPoint>,
    /// Why categories were left out.
    pub notes: Vec<String>,
}

pub const SCATTER_HEADER: &str = "category,human_irr,human_model_irr";

/// Human kappa against averaged human-model kappa for one run, one point
/// per category. Categories with an undefined value are omitted and noted.
pub fn scatter_data(report: &AgreementReport, run_id: &str) -> Option<ScatterData> {
    let mut points = Vec::new();
    let mut notes = Vec::new();
    for c in &report.categories {
        let model = c.models.iter().find(|m| m.run_id == run_id)?;
        match (c.human.kappa, model.mean) {
            (Some(h), Some(m)) => points.push(ScatterPoint {
                category: c.key.clone(),
                human_irr: h,
                human_model_irr: m,
            }),
            (h, _) => notes.push(format!(
                "{} omitted: {} kappa undefined",
                c.key,
                if h.is_none() { "human" } else { "human-model" }
            )),
        }
    }
    Some(ScatterData {
        run_id: run_id.to_string(),
        points,
        notes,
    })
}

impl ScatterData {
    /// CSV with the shortest round-trip float representation; notes follow
    /// as `#` lines.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SCATTER_HEADER}\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.category, p.human_irr, p.human_model_irr);
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<ScatterPoint>, MetricsError> {
        let err = |line: usize, message: &str| MetricsError::ScatterParse {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == SCATTER_HEADER => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [category, h, m] = fields[..] else {
                return Err(err(i + 1, "expected three fields"));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(i + 1, &e.to_string()));
            points.push(ScatterPoint {
                category: category.to_string(),
                human_irr: num(h)?,
                human_model_irr: num(m)?,
            });
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{Annotation, LabelValue};

    fn matrix(source: &str, rows: &[(&str, &[&str])], rubric: &Rubric) -> AnnotationMatrix {
        AnnotationMatrix::from_annotations(rows.iter().flat_map(|(c, keys)| {
            rubric
                .keys()
                .map(|k| Annotation::human(c, k, source, keys.contains(&k)))
                .collect::<Vec<_>>()
        }))
    }

    fn fixture() -> (Rubric, AnnotationMatrix, AnnotationMatrix, AnnotationMatrix) {
        let rubric = Rubric::sight_v1();
        let h1 = matrix(
            "h1",
            &[
                ("c1", &["general", "gratitude"]),
                ("c2", &["na"]),
                ("c3", &["pedagogy", "gratitude"]),
                ("c4", &["general"]),
            ],
            &rubric,
        );
        let h2 = matrix(
            "h2",
            &[
                ("c1", &["general", "gratitude"]),
                ("c2", &["na", "general"]),
                ("c3", &["pedagogy"]),
                ("c4", &["general"]),
            ],
            &rubric,
        );
        let mut m = matrix(
            "run",
            &[
                ("c1", &["general"]),
                ("c2", &["na"]),
                ("c3", &["gratitude"]),
                ("c4", &["general", "na"]),
            ],
            &rubric,
        );
        let mut a = m.get("c4", "pedagogy").unwrap().clone();
        a.value = LabelValue::Unparseable;
        m.insert(a);
        (rubric, h1, h2, m)
    }

    #[test]
    fn report_shape_and_values() {
        let (rubric, h1, h2, m) = fixture();
        let runs = [ModelRun {
            run_id: "zs",
            strategy: Strategy::ZeroShot,
            k: 3,
            matrix: &m,
        }];
        let r = agreement_report(&rubric, ("h1", &h1), ("h2", &h2), &runs).unwrap();
        assert_eq!(r.sample_size, 4);
        assert_eq!(r.categories.len(), 9);
        let abbrevs: Vec<&str> = r.categories.iter().map(|c| c.abbrev.as_str()).collect();
        assert_eq!(
            abbrevs,
            ["gen.", "conf.", "peda.", "set.", "pers.", "clar.", "gra.", "noneng.", "na"]
        );
        let gra = &r.categories[6];
        // h1 [1,0,1,0] vs h2 [1,0,0,0]: p_o 0.75, p_e 0.5*0.25+0.5*0.75 = 0.5.
        assert!((gra.human.kappa.unwrap() - 0.5).abs() < 1e-12);
        let peda = &r.categories[2];
        assert_eq!(peda.models[0].unparseable, 1);
        let table = r.to_table();
        assert!(table.contains("0-shot (zs)"));
        assert!(table.contains("1 unparseable labels counted as false"));
        assert!(r.to_csv().lines().count() == 1 + 9 * 2);
        let back: AgreementReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn model_must_cover_sample() {
        let (rubric, h1, h2, _) = fixture();
        let partial = matrix("run", &[("c1", &["general"])], &rubric);
        let runs = [ModelRun {
            run_id: "zs",
            strategy: Strategy::ZeroShot,
            k: 3,
            matrix: &partial,
        }];
        assert!(matches!(
            agreement_report(&rubric, ("h1", &h1), ("h2", &h2), &runs),
            Err(MetricsError::ModelCoverage { .. })
        ));
    }

    #[test]
    fn scatter_round_trips_and_notes_undefined() {
        let (rubric, h1, h2, m) = fixture();
        let runs = [ModelRun {
            run_id: "zs",
            strategy: Strategy::ZeroShot,
            k: 3,
            matrix: &m,
        }];
        let r = agreement_report(&rubric, ("h1", &h1), ("h2", &h2), &runs).unwrap();
        let s = scatter_data(&r, "zs").unwrap();
        assert_eq!(s.points.len() + s.notes.len(), 9);
        assert!(!s.notes.is_empty());
        let parsed = ScatterData::parse_csv(&s.to_csv()).unwrap();
        assert_eq!(parsed, s.points);
        assert!(scatter_data(&r, "other").is_none());
    }

    #[test]
    fn scatter_parse_errors() {
        assert!(ScatterData::parse_csv("a,b\n").is_err());
        assert!(ScatterData::parse_csv(&format!("{SCATTER_HEADER}\ngeneral,0.1\n")).is_err());
        assert!(ScatterData::parse_csv(&format!("{SCATTER_HEADER}\ngeneral,x,0.1\n")).is_err());
    }
}
