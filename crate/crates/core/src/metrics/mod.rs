//! Retrieval, exact-answer, span and run-variance metrics.
//!
//! Means are taken over values sorted ascending so every aggregate is
//! bit-for-bit independent of question order.

mod report;

pub use report::{
    evaluate, evaluate_medproc, render_metric_table, render_variance_table, EvaluationReport,
    MedprocEval,
};

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::answer::Verdict;

/// Only the first ten retrieved documents are scored.
pub const AP_CUTOFF: usize = 10;
pub const DEFAULT_GMAP_EPSILON: f64 = 0.01;
/// At most this many factoid candidates are considered.
pub const FACTOID_CUTOFF: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("document {0} is retrieved more than once")]
    DuplicateDocument(String),
    #[error("no items to evaluate: {0}")]
    EmptyInput(String),
    #[error("run {run} has different metric keys: {detail}")]
    KeyMismatch { run: usize, detail: String },
    #[error("variance needs at least two runs, got {0}")]
    InsufficientRuns(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Order-independent arithmetic mean.
pub(crate) fn stable_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Average precision over the first [`AP_CUTOFF`] documents, divided by
/// `min(|gold|, 10)`; 0 when gold is empty.
pub fn average_precision<S: AsRef<str>>(retrieved: &[S], gold: &HashSet<String>) -> Result<f64, MetricError> {
    let mut seen = HashSet::new();
    for d in retrieved {
        if !seen.insert(d.as_ref()) {
            return Err(MetricError::DuplicateDocument(d.as_ref().to_string()));
        }
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, d) in retrieved.iter().take(AP_CUTOFF).enumerate() {
        if gold.contains(d.as_ref()) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / gold.len().min(AP_CUTOFF) as f64)
}

/// Arithmetic mean and geometric mean of `max(ap, epsilon)`.
pub fn map_gmap(aps: &[f64], epsilon: f64) -> Result<(f64, f64), MetricError> {
    if aps.is_empty() {
        return Err(MetricError::EmptyInput("average precision list".into()));
    }
    if !(epsilon > 0.0) {
        return Err(MetricError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if let Some(bad) = aps.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(MetricError::InvalidInput(format!("AP {bad} outside [0, 1]")));
    }
    let logs: Vec<f64> = aps.iter().map(|a| a.max(epsilon).ln()).collect();
    let gmap = stable_mean(&logs).exp();
    Ok((stable_mean(aps), gmap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEval {
    pub per_question_ap: BTreeMap<String, f64>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub map: f64,
    pub gmap: f64,
    pub epsilon: f64,
}

/// `(question id, retrieved, gold)` triples. Precision and recall use the
/// whole retrieved list; AP uses the first ten.
pub fn retrieval_eval(
    items: &[(String, Vec<String>, HashSet<String>)],
    epsilon: f64,
) -> Result<RetrievalEval, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyInput("retrieval questions".into()));
    }
    let mut per_question_ap = BTreeMap::new();
    let (mut ps, mut rs, mut fs, mut aps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (id, retrieved, gold) in items {
        let ap = average_precision(retrieved, gold)?;
        let relevant = retrieved.iter().filter(|d| gold.contains(*d)).count() as f64;
        let p = if retrieved.is_empty() { 0.0 } else { relevant / retrieved.len() as f64 };
        let r = if gold.is_empty() { 0.0 } else { relevant / gold.len() as f64 };
        ps.push(p);
        rs.push(r);
        fs.push(f1(p, r));
        aps.push(ap);
        per_question_ap.insert(id.clone(), ap);
    }
    let (map, gmap) = map_gmap(&aps, epsilon)?;
    Ok(RetrievalEval {
        per_question_ap,
        mean_precision: stable_mean(&ps),
        mean_recall: stable_mean(&rs),
        mean_f1: stable_mean(&fs),
        map,
        gmap,
        epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YesNoEval {
    pub accuracy: f64,
    pub f1_yes: f64,
    pub f1_no: f64,
    pub macro_f1: f64,
}

fn class_f1(pairs: &[(Verdict, Verdict)], class: Verdict) -> f64 {
    let tp = pairs.iter().filter(|(g, p)| *g == class && *p == class).count() as f64;
    let fp = pairs.iter().filter(|(g, p)| *g != class && *p == class).count() as f64;
    let fn_ = pairs.iter().filter(|(g, p)| *g == class && *p != class).count() as f64;
    if tp + fp + fn_ == 0.0 {
        // The class never occurs and is never predicted: nothing to get wrong.
        return 1.0;
    }
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// `(gold, predicted)` verdict pairs.
pub fn yesno_eval(pairs: &[(Verdict, Verdict)]) -> Result<YesNoEval, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput("yes/no questions".into()));
    }
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    let f1_yes = class_f1(pairs, Verdict::Yes);
    let f1_no = class_f1(pairs, Verdict::No);
    Ok(YesNoEval {
        accuracy: correct as f64 / pairs.len() as f64,
        f1_yes,
        f1_no,
        macro_f1: (f1_yes + f1_no) / 2.0,
    })
}

/// Trimmed, lowercased form used for answer matching.
pub fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

fn synonym_set(item: &[String]) -> HashSet<String> {
    item.iter().map(|s| normalize_answer(s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactoidEval {
    pub strict_accuracy: f64,
    pub lenient_accuracy: f64,
    pub mrr: f64,
}

/// `(gold items as synonym sets, ranked predictions)`. A prediction matches
/// when it equals any synonym of any gold item.
pub fn factoid_eval(items: &[(Vec<Vec<String>>, Vec<String>)]) -> Result<FactoidEval, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyInput("factoid questions".into()));
    }
    let (mut strict, mut lenient, mut rr) = (Vec::new(), Vec::new(), Vec::new());
    for (gold, predicted) in items {
        let accepted: HashSet<String> = gold.iter().flat_map(|i| synonym_set(i)).collect();
        let rank = predicted
            .iter()
            .take(FACTOID_CUTOFF)
            .position(|p| accepted.contains(&normalize_answer(p)));
        strict.push(if rank == Some(0) { 1.0 } else { 0.0 });
        lenient.push(if rank.is_some() { 1.0 } else { 0.0 });
        rr.push(rank.map_or(0.0, |r| 1.0 / (r + 1) as f64));
    }
    Ok(FactoidEval {
        strict_accuracy: stable_mean(&strict),
        lenient_accuracy: stable_mean(&lenient),
        mrr: stable_mean(&rr),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn perfect() -> Self {
        Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        }
    }

    fn from_counts(matched_pred: usize, n_pred: usize, covered_gold: usize, n_gold: usize) -> Self {
        if n_pred == 0 && n_gold == 0 {
            return Prf::perfect();
        }
        let precision = if n_pred == 0 { 0.0 } else { matched_pred as f64 / n_pred as f64 };
        let recall = if n_gold == 0 { 0.0 } else { covered_gold as f64 / n_gold as f64 };
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Per-question precision, recall and F1 averaged over questions.
/// Predictions are deduplicated after normalization.
pub fn list_eval(items: &[(Vec<Vec<String>>, Vec<String>)]) -> Result<Prf, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyInput("list questions".into()));
    }
    let (mut ps, mut rs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
    for (gold, predicted) in items {
        let gold_sets: Vec<HashSet<String>> = gold.iter().map(|i| synonym_set(i)).collect();
        let mut seen = HashSet::new();
        let preds: Vec<String> = predicted
            .iter()
            .map(|p| normalize_answer(p))
            .filter(|p| seen.insert(p.clone()))
            .collect();
        let matched = preds
            .iter()
            .filter(|p| gold_sets.iter().any(|g| g.contains(*p)))
            .count();
        let covered = gold_sets
            .iter()
            .filter(|g| preds.iter().any(|p| g.contains(p)))
            .count();
        let prf = Prf::from_counts(matched, preds.len(), covered, gold_sets.len());
        ps.push(prf.precision);
        rs.push(prf.recall);
        fs.push(prf.f1);
    }
    Ok(Prf {
        precision: stable_mean(&ps),
        recall: stable_mean(&rs),
        f1: stable_mean(&fs),
    })
}

/// Exact-match micro P/R/F1 over sets of keys (spans, span+code, or
/// document+code pairs). Duplicates collapse.
pub fn span_micro_f1<T: Eq + Hash>(gold: &[T], pred: &[T]) -> Prf {
    let gold: HashSet<&T> = gold.iter().collect();
    let pred: HashSet<&T> = pred.iter().collect();
    let tp = pred.intersection(&gold).count();
    Prf::from_counts(tp, pred.len(), tp, gold.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

/// Sample mean, sample standard deviation, min and max of every metric
/// across runs. All runs must report the same metric names.
pub fn variance_report(
    runs: &[BTreeMap<String, f64>],
) -> Result<BTreeMap<String, MetricStats>, MetricError> {
    if runs.len() < 2 {
        return Err(MetricError::InsufficientRuns(runs.len()));
    }
    let keys: Vec<&String> = runs[0].keys().collect();
    for (i, run) in runs.iter().enumerate().skip(1) {
        if run.keys().collect::<Vec<_>>() != keys {
            let extra: Vec<&String> = run.keys().filter(|k| !runs[0].contains_key(*k)).collect();
            let missing: Vec<&&String> = keys.iter().filter(|k| !run.contains_key(**k)).collect();
            return Err(MetricError::KeyMismatch {
                run: i,
                detail: format!("extra {extra:?}, missing {missing:?}"),
            });
        }
    }
    let n = runs.len() as f64;
    let mut out = BTreeMap::new();
    for key in keys {
        let values: Vec<f64> = runs.iter().map(|r| r[key]).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mean, stddev) = if min == max {
            (min, 0.0)
        } else {
            let mean = stable_mean(&values);
            let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
            (mean, (stable_mean(&sq) * n / (n - 1.0)).sqrt())
        };
        out.insert(key.clone(), MetricStats { mean, stddev, min, max });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> HashSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-4
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&["B", "A"], &set(&["A"])).unwrap(), 0.5);
        assert_eq!(average_precision(&["B", "A"], &set(&["A", "B"])).unwrap(), 1.0);
        let ap = average_precision(&["A", "C", "B"], &set(&["A", "B"])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&["A"], &set(&[])).unwrap(), 0.0);
        assert_eq!(
            average_precision(&["A", "A"], &set(&["A"])),
            Err(MetricError::DuplicateDocument("A".into()))
        );
    }

    #[test]
    fn map_gmap_examples() {
        let (map, gmap) = map_gmap(&[1.0, 0.0], 0.01).unwrap();
        assert_eq!(map, 0.5);
        assert!((gmap - 0.1).abs() < 1e-12);
        let (map, gmap) = map_gmap(&[0.3, 0.3, 0.3], 0.01).unwrap();
        assert!((map - 0.3).abs() < 1e-12 && (gmap - 0.3).abs() < 1e-12);
        assert!(matches!(map_gmap(&[], 0.01), Err(MetricError::EmptyInput(_))));
    }

    #[test]
    fn yesno_examples() {
        use Verdict::{No, Yes};
        let e = yesno_eval(&[(Yes, Yes), (Yes, No), (No, No), (No, No)]).unwrap();
        assert!(close(e.accuracy, 0.75) && close(e.f1_yes, 0.6667));
        assert!(close(e.f1_no, 0.8) && close(e.macro_f1, 0.7333));
        let e = yesno_eval(&[(Yes, No), (No, Yes)]).unwrap();
        assert_eq!((e.accuracy, e.macro_f1), (0.0, 0.0));
        let e = yesno_eval(&[(Yes, Yes)]).unwrap();
        assert_eq!(e.macro_f1, 1.0);
    }

    fn gold(items: &[&str]) -> Vec<Vec<String>> {
        items.iter().map(|s| vec![s.to_string()]).collect()
    }

    fn pred(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn factoid_examples() {
        let e = factoid_eval(&[
            (gold(&["a"]), pred(&["a", "b"])),
            (gold(&["c"]), pred(&["x", "y", "C "])),
        ])
        .unwrap();
        assert_eq!((e.strict_accuracy, e.lenient_accuracy), (0.5, 1.0));
        assert!(close(e.mrr, 0.6667));
        let e = factoid_eval(&[(gold(&["a"]), pred(&["1", "2", "3", "4", "5", "a"]))]).unwrap();
        assert_eq!((e.strict_accuracy, e.lenient_accuracy, e.mrr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn list_examples() {
        let e = list_eval(&[(gold(&["a", "b"]), pred(&["a", "c"]))]).unwrap();
        assert_eq!((e.precision, e.recall, e.f1), (0.5, 0.5, 0.5));
        let e = list_eval(&[(gold(&["a", "b", "c"]), pred(&["a", "b"]))]).unwrap();
        assert!(close(e.precision, 1.0) && close(e.recall, 0.6667) && close(e.f1, 0.8));
        let e = list_eval(&[(gold(&["a"]), pred(&[]))]).unwrap();
        assert_eq!((e.precision, e.recall, e.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn span_examples() {
        let g = [("d", 0, 3), ("d", 5, 9)];
        assert_eq!(span_micro_f1(&g, &g).f1, 1.0);
        let e = span_micro_f1(&g, &[("d", 0, 3)]);
        assert!(close(e.precision, 1.0) && close(e.recall, 0.5) && close(e.f1, 0.6667));
        assert_eq!(span_micro_f1(&g[..1], &[("d", 0, 4)]).f1, 0.0);
    }

    #[test]
    fn variance_examples() {
        let run = |v: f64| BTreeMap::from([("m".to_string(), v)]);
        let r = variance_report(&[run(0.4), run(0.6)]).unwrap();
        assert!(close(r["m"].mean, 0.5) && close(r["m"].stddev, 0.1414));
        let same: Vec<_> = (0..5).map(|_| run(0.7333)).collect();
        assert_eq!(variance_report(&same).unwrap()["m"].stddev, 0.0);
        let other = BTreeMap::from([("k".to_string(), 0.1)]);
        assert!(matches!(
            variance_report(&[run(0.1), other]),
            Err(MetricError::KeyMismatch { run: 1, .. })
        ));
        assert!(matches!(variance_report(&[run(0.1)]), Err(MetricError::InsufficientRuns(1))));
    }

    proptest! {
        #[test]
        fn factoid_ordering(
            items in proptest::collection::vec(
                (proptest::collection::vec("[a-d]", 1..3), proptest::collection::vec("[a-f]", 0..6)),
                1..20,
            )
        ) {
            let items: Vec<(Vec<Vec<String>>, Vec<String>)> = items
                .into_iter()
                .map(|(g, p)| (g.into_iter().map(|s| vec![s]).collect(), p))
                .collect();
            let e = factoid_eval(&items).unwrap();
            prop_assert!(e.strict_accuracy <= e.mrr + 1e-12);
            prop_assert!(e.mrr <= e.lenient_accuracy + 1e-12);
        }

        #[test]
        fn gmap_below_map(aps in proptest::collection::vec(0.0f64..=1.0, 1..30), eps in 0.001f64..0.1) {
            let (_, gmap) = map_gmap(&aps, eps).unwrap();
            let adjusted: Vec<f64> = aps.iter().map(|a| a.max(eps)).collect();
            prop_assert!(gmap <= stable_mean(&adjusted) + 1e-12);
        }
    }
}
