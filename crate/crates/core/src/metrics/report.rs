//! Scoring a submission against gold, and rendering metric tables.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    factoid_eval, list_eval, retrieval_eval, span_micro_f1, yesno_eval, FactoidEval, MetricError,
    MetricStats, Prf, RetrievalEval, YesNoEval,
};
use crate::answer::ExactAnswer;
use crate::bioasq::{GoldExact, GoldRecord, SubmissionEntry};
use crate::medproc::Mention;
use crate::types::QuestionType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub retrieval: Option<RetrievalEval>,
    pub yesno: Option<YesNoEval>,
    pub factoid: Option<FactoidEval>,
    pub list: Option<Prf>,
    /// Gold questions with no entry in the submission.
    pub unanswered: Vec<String>,
}

impl EvaluationReport {
    /// Flat `family.metric` view used for tables and run comparison.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), v);
        };
        if let Some(r) = &self.retrieval {
            put("documents.map", r.map);
            put("documents.gmap", r.gmap);
            put("documents.mean_precision", r.mean_precision);
            put("documents.mean_recall", r.mean_recall);
            put("documents.mean_f1", r.mean_f1);
        }
        if let Some(y) = &self.yesno {
            put("yesno.accuracy", y.accuracy);
            put("yesno.f1_yes", y.f1_yes);
            put("yesno.f1_no", y.f1_no);
            put("yesno.macro_f1", y.macro_f1);
        }
        if let Some(f) = &self.factoid {
            put("factoid.strict_accuracy", f.strict_accuracy);
            put("factoid.lenient_accuracy", f.lenient_accuracy);
            put("factoid.mrr", f.mrr);
        }
        if let Some(l) = &self.list {
            put("list.mean_precision", l.precision);
            put("list.mean_recall", l.recall);
            put("list.mean_f1", l.f1);
        }
        m
    }
}

fn predicted_entries(result: Option<&SubmissionEntry>) -> Vec<String> {
    match result.and_then(|e| e.result.exact.as_ref()) {
        Some(ExactAnswer::Factoid(v)) | Some(ExactAnswer::List(v)) => v.clone(),
        _ => Vec::new(),
    }
}

/// Scores every metric family the submission has data for.
///
/// Documents are scored when any entry carries documents; gold questions
/// without a submitted list then count as empty retrievals. Unanswered
/// factoid and list questions count as empty predictions. Unanswered yes/no
/// questions are left out of the confusion matrix and listed in
/// `unanswered`.
pub fn evaluate(
    submission: &[SubmissionEntry],
    gold: &[GoldRecord],
    epsilon: f64,
) -> Result<EvaluationReport, MetricError> {
    let mut by_id: HashMap<&str, &SubmissionEntry> = HashMap::new();
    for e in submission {
        if by_id.insert(e.id.as_str(), e).is_some() {
            return Err(MetricError::InvalidInput(format!("question {} submitted twice", e.id)));
        }
    }
    let unanswered: Vec<String> = gold
        .iter()
        .filter(|g| !by_id.contains_key(g.question.id.as_str()))
        .map(|g| g.question.id.clone())
        .collect();

    let retrieval = if submission.iter().any(|e| e.result.documents.is_some()) {
        let items: Vec<(String, Vec<String>, HashSet<String>)> = gold
            .iter()
            .filter_map(|g| {
                let docs = g.question.gold_documents.as_ref().filter(|d| !d.is_empty())?;
                let retrieved = by_id
                    .get(g.question.id.as_str())
                    .and_then(|e| e.result.documents.clone())
                    .unwrap_or_default();
                Some((g.question.id.clone(), retrieved, docs.iter().cloned().collect()))
            })
            .collect();
        (!items.is_empty())
            .then(|| retrieval_eval(&items, epsilon))
            .transpose()?
    } else {
        None
    };

    let any_exact = submission.iter().any(|e| e.result.exact.is_some());
    let mut yesno_pairs = Vec::new();
    let mut factoid_items = Vec::new();
    let mut list_items = Vec::new();
    if any_exact {
        for g in gold {
            let entry = by_id.get(g.question.id.as_str()).copied();
            match (g.question.qtype, &g.exact) {
                (QuestionType::Yesno, Some(GoldExact::YesNo(verdict))) => {
                    if let Some(ExactAnswer::YesNo(p)) = entry.and_then(|e| e.result.exact.as_ref()) {
                        yesno_pairs.push((*verdict, *p));
                    }
                }
                (QuestionType::Factoid, Some(GoldExact::Items(items))) => {
                    factoid_items.push((items.clone(), predicted_entries(entry)));
                }
                (QuestionType::List, Some(GoldExact::Items(items))) => {
                    list_items.push((items.clone(), predicted_entries(entry)));
                }
                _ => {}
            }
        }
    }
    Ok(EvaluationReport {
        retrieval,
        yesno: (!yesno_pairs.is_empty()).then(|| yesno_eval(&yesno_pairs)).transpose()?,
        factoid: (!factoid_items.is_empty()).then(|| factoid_eval(&factoid_items)).transpose()?,
        list: (!list_items.is_empty()).then(|| list_eval(&list_items)).transpose()?,
        unanswered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedprocEval {
    pub ner: Prf,
    pub entity_linking: Prf,
    pub indexing: Prf,
}

impl MedprocEval {
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (family, prf) in [("ner", self.ner), ("el", self.entity_linking), ("indexing", self.indexing)] {
            m.insert(format!("{family}.precision"), prf.precision);
            m.insert(format!("{family}.recall"), prf.recall);
            m.insert(format!("{family}.f1"), prf.f1);
        }
        m
    }
}

/// NER on exact spans, linking on span plus code, indexing on
/// document/code pairs.
pub fn evaluate_medproc(gold: &[Mention], pred: &[Mention]) -> MedprocEval {
    let spans = |ms: &[Mention]| -> Vec<(String, usize, usize)> {
        ms.iter().map(|m| (m.document_id.clone(), m.start, m.end)).collect()
    };
    let linked = |ms: &[Mention]| -> Vec<(String, usize, usize, String)> {
        ms.iter()
            .filter_map(|m| Some((m.document_id.clone(), m.start, m.end, m.code.clone()?)))
            .collect()
    };
    let indexed = |ms: &[Mention]| -> Vec<(String, String)> {
        ms.iter()
            .filter_map(|m| Some((m.document_id.clone(), m.code.clone()?)))
            .collect()
    };
    MedprocEval {
        ner: span_micro_f1(&spans(gold), &spans(pred)),
        entity_linking: span_micro_f1(&linked(gold), &linked(pred)),
        indexing: span_micro_f1(&indexed(gold), &indexed(pred)),
    }
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.clone()));
        out.push('\n');
    }
    out
}

pub fn render_metric_table(metrics: &BTreeMap<String, f64>) -> String {
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|(k, v)| vec![k.clone(), format!("{v:.4}")])
        .collect();
    aligned(&["metric", "value"], &rows)
}

pub fn render_variance_table(stats: &BTreeMap<String, MetricStats>) -> String {
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|(k, s)| {
            vec![
                k.clone(),
                format!("{:.4}", s.mean),
                format!("{:.4}", s.stddev),
                format!("{:.4}", s.min),
                format!("{:.4}", s.max),
            ]
        })
        .collect();
    aligned(&["metric", "mean", "stddev", "min", "max"], &rows)
}
