//! Batch pipelines. Each returns the files it would write so callers can
//! store them, compare them, or score them in memory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use medqa::answer::{Answerer, ExactAnswer};
use medqa::bioasq::{render_submission, QuestionResult};
use medqa::llm::{Gateway, TranscriptEntry};
use medqa::medproc::{
    index_document, link_mentions, load_examples, load_gazetteer, render_el_tsv,
    render_indexing_tsv, render_ner_tsv, Gazetteer, Mention, ProcedureExtractor,
};
use medqa::retrieval::{RetrievalSettings, Retriever};
use medqa::Question;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::services::Services;

pub const SUBMISSION_FILE: &str = "submission.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const LOG_FILE: &str = "log.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const NER_FILE: &str = "ner.tsv";
pub const EL_FILE: &str = "el.tsv";
pub const INDEXING_FILE: &str = "indexing.tsv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

/// Output files by name, plus the failures behind the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub files: BTreeMap<String, String>,
    pub failures: Vec<Failure>,
}

impl BatchOutput {
    pub fn file(&self, name: &str) -> &str {
        self.files.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

struct ItemRun<R> {
    id: String,
    result: Result<R, String>,
    transcript: Vec<TranscriptEntry>,
}

/// Runs `work` over `items` on `workers` threads, one gateway per item.
/// Results come back in input order.
fn run_items<T, R, F>(services: &Services, items: &[T], id_of: impl Fn(&T) -> String + Sync, work: F) -> Result<Vec<ItemRun<R>>>
where
    T: Sync,
    R: Send,
    F: Fn(&T, &Gateway) -> Result<R, String> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(services.config.workers)
        .build()
        .context("cannot start worker pool")?;
    Ok(pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                let gateway = services.gateway();
                let id = id_of(item);
                let result = work(item, &gateway);
                if let Err(e) = &result {
                    log::warn!("{id}: {e}");
                }
                ItemRun {
                    id,
                    result,
                    transcript: gateway.transcript(),
                }
            })
            .collect()
    }))
}

fn jsonl<I: IntoIterator<Item = Value>>(values: I) -> String {
    values.into_iter().map(|v| format!("{v}\n")).collect()
}

/// One line per model exchange: fingerprints and outcome, never prompts or
/// credentials.
fn exchange_log<R>(runs: &[ItemRun<R>]) -> String {
    jsonl(runs.iter().flat_map(|run| {
        run.transcript.iter().enumerate().map(|(seq, e)| {
            json!({
                "item": run.id,
                "seq": seq,
                "fingerprint": e.fingerprint,
                "attempts": e.attempts,
                "cached": e.cached,
                "response_chars": e.response.as_ref().map(|r| r.chars().count()),
                "error": e.error,
            })
        })
    }))
}

fn failures<R>(runs: &[ItemRun<R>]) -> Vec<Failure> {
    runs.iter()
        .filter_map(|r| {
            r.result.as_ref().err().map(|e| Failure {
                id: r.id.clone(),
                error: e.clone(),
            })
        })
        .collect()
}

fn summary<R>(command: &str, services: &Services, runs: &[ItemRun<R>]) -> String {
    let failed = failures(runs);
    let value = json!({
        "command": command,
        "items": runs.len(),
        "succeeded": runs.len() - failed.len(),
        "failed": failed.len(),
        "failures": failed,
        "model_exchanges": runs.iter().map(|r| r.transcript.len()).sum::<usize>(),
        "config": services.config.summary(),
    });
    format!("{}\n", serde_json::to_string_pretty(&value).expect("summary serializes"))
}

/// Document retrieval for every question.
pub fn run_phase_a(services: &Services, questions: &[Question]) -> Result<BatchOutput> {
    let settings = RetrievalSettings::from(&services.config);
    let runs = run_items(services, questions, |q| q.id.clone(), |q, gateway| {
        Retriever::new(gateway, services.pubmed(), settings.clone())
            .retrieve(q)
            .map_err(|e| e.to_string())
    })?;

    let mut results = BTreeMap::new();
    let mut traces = Vec::new();
    for run in &runs {
        match &run.result {
            Ok(trace) => {
                results.insert(
                    run.id.clone(),
                    QuestionResult {
                        documents: Some(trace.final_documents.clone()),
                        ..Default::default()
                    },
                );
                traces.push(json!({"status": "ok", "trace": trace}));
            }
            Err(e) => traces.push(json!({"status": "failed", "question_id": run.id, "error": e})),
        }
    }
    finish("run-phase-a", services, questions, &runs, results, traces)
}

/// Exact and ideal answers for every question.
pub fn run_phase_b(services: &Services, questions: &[Question]) -> Result<BatchOutput> {
    let grounded = services.config.grounded;
    let model_id = services.config.model_id.clone();
    let runs = run_items(services, questions, |q| q.id.clone(), |q, gateway| {
        Answerer::new(gateway, model_id.clone())
            .answer(q, grounded)
            .map_err(|e| e.to_string())
    })?;

    let mut results = BTreeMap::new();
    let mut traces = Vec::new();
    for (run, q) in runs.iter().zip(questions) {
        match &run.result {
            Ok(bundle) => {
                let exact = (bundle.exact != ExactAnswer::Summary).then(|| bundle.exact.clone());
                results.insert(
                    run.id.clone(),
                    QuestionResult {
                        documents: None,
                        exact: exact.clone(),
                        ideal: Some(bundle.ideal.text.clone()),
                    },
                );
                traces.push(json!({
                    "status": "ok",
                    "question_id": run.id,
                    "type": q.qtype,
                    "grounded": grounded,
                    "context_snippets": if grounded { q.snippets().len() } else { 0 },
                    "exact": exact,
                    "ideal_words": bundle.ideal.word_count(),
                }));
            }
            Err(e) => traces.push(json!({"status": "failed", "question_id": run.id, "error": e})),
        }
    }
    finish("run-phase-b", services, questions, &runs, results, traces)
}

fn finish<R>(
    command: &str,
    services: &Services,
    questions: &[Question],
    runs: &[ItemRun<R>],
    results: BTreeMap<String, QuestionResult>,
    traces: Vec<Value>,
) -> Result<BatchOutput> {
    let submission = render_submission(questions, &results)?;
    let mut files = BTreeMap::new();
    files.insert(SUBMISSION_FILE.to_string(), submission);
    files.insert(TRACE_FILE.to_string(), jsonl(traces));
    files.insert(LOG_FILE.to_string(), exchange_log(runs));
    files.insert(SUMMARY_FILE.to_string(), summary(command, services, runs));
    Ok(BatchOutput {
        files,
        failures: failures(runs),
    })
}

/// A clinical report; the id is the file name without extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// Every `*.txt` file in `dir`, sorted by id.
pub fn load_documents(dir: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("non UTF-8 file name {}", path.display()))?
            .to_string();
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        docs.push(Document { id, text });
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

/// Procedure extraction, linking and indexing for every document.
pub fn run_medprocner(services: &Services, documents: &[Document]) -> Result<BatchOutput> {
    let settings = &services.config.medproc;
    let examples_path = settings
        .examples
        .as_ref()
        .context("medproc.examples must point to the few-shot examples file")?;
    let examples = load_examples(examples_path)?;
    let gazetteer = match &settings.gazetteer {
        Some(path) => Gazetteer::new(load_gazetteer(path, &settings.columns, &settings.procedure_tags)?),
        None => {
            log::warn!("no gazetteer configured; mentions stay unlinked");
            Gazetteer::default()
        }
    };
    if settings.example_count != examples.len() {
        anyhow::bail!(
            "medproc.example_count is {} but {} holds {} examples",
            settings.example_count,
            examples_path.display(),
            examples.len()
        );
    }
    let model_id = services.config.model_id.clone();
    let threshold = settings.link_threshold;
    let runs = run_items(services, documents, |d| d.id.clone(), |doc, gateway| {
        let extractor = ProcedureExtractor::new(gateway, model_id.clone(), examples.clone(), settings.example_count)
            .map_err(|e| e.to_string())?;
        let mut extraction = extractor.extract(&doc.id, &doc.text).map_err(|e| e.to_string())?;
        if !gazetteer.is_empty() {
            link_mentions(&mut extraction.mentions, &gazetteer, threshold);
        }
        Ok(extraction)
    })?;

    let mut mentions: Vec<Mention> = Vec::new();
    let mut index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut traces = Vec::new();
    for run in &runs {
        match &run.result {
            Ok(extraction) => {
                index.insert(run.id.clone(), index_document(&extraction.mentions));
                mentions.extend(extraction.mentions.iter().cloned());
                traces.push(json!({
                    "status": "ok",
                    "document_id": run.id,
                    "mentions": extraction.mentions.len(),
                    "linked": extraction.mentions.iter().filter(|m| m.code.is_some()).count(),
                    "dropped": extraction.dropped,
                }));
            }
            Err(e) => traces.push(json!({"status": "failed", "document_id": run.id, "error": e})),
        }
    }
    mentions.sort();

    let mut files = BTreeMap::new();
    files.insert(NER_FILE.to_string(), render_ner_tsv(&mentions));
    files.insert(EL_FILE.to_string(), render_el_tsv(&mentions));
    files.insert(INDEXING_FILE.to_string(), render_indexing_tsv(&index));
    files.insert(TRACE_FILE.to_string(), jsonl(traces));
    files.insert(LOG_FILE.to_string(), exchange_log(&runs));
    files.insert(SUMMARY_FILE.to_string(), summary("run-medprocner", services, &runs));
    Ok(BatchOutput {
        files,
        failures: failures(&runs),
    })
}
