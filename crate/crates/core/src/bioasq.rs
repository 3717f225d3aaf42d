//! Reading BioASQ question/gold files and writing challenge submissions.
//!
//! Documents are kept as bare PMIDs everywhere in the crate and only turned
//! into `http://www.ncbi.nlm.nih.gov/pubmed/<PMID>` URLs on the way out.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::answer::{ExactAnswer, Verdict};
use crate::types::{
    is_valid_pmid, pmid_from_url, pmid_to_url, Question, QuestionType, Snippet, SnippetSection,
};

#[derive(Debug, thiserror::Error)]
pub enum BioasqError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("question #{index}: {message}")]
    Schema { index: usize, message: String },
    #[error("result references unknown question id {0:?}")]
    UnknownQuestionId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BioasqError + '_ {
    move |source| BioasqError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Deserialize)]
struct RawFile {
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
struct RawQuestion {
    id: Option<String>,
    body: Option<String>,
    #[serde(rename = "type")]
    qtype: Option<String>,
    documents: Option<Vec<String>>,
    snippets: Option<Vec<RawSnippet>>,
    exact_answer: Option<Value>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawSnippet {
    document: Option<String>,
    text: Option<String>,
    begin_section: Option<String>,
    offset_in_begin_section: Option<usize>,
    offset_in_end_section: Option<usize>,
}

fn schema(index: usize, message: impl Into<String>) -> BioasqError {
    BioasqError::Schema {
        index,
        message: message.into(),
    }
}

fn convert_question(index: usize, raw: &RawQuestion) -> Result<Question, BioasqError> {
    let id = raw
        .id
        .as_deref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| schema(index, "missing or empty \"id\""))?;
    let body = raw
        .body
        .as_deref()
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| schema(index, format!("question {id}: missing or empty \"body\"")))?;
    let qtype: QuestionType = raw
        .qtype
        .as_deref()
        .ok_or_else(|| schema(index, format!("question {id}: missing \"type\"")))?
        .parse()
        .map_err(|e: String| schema(index, format!("question {id}: {e}")))?;

    let gold_documents = raw
        .documents
        .as_ref()
        .map(|docs| {
            docs.iter()
                .map(|d| {
                    pmid_from_url(d).ok_or_else(|| {
                        schema(index, format!("question {id}: bad document URL {d:?}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;

    let gold_snippets = raw
        .snippets
        .as_ref()
        .map(|snips| {
            snips
                .iter()
                .map(|s| convert_snippet(index, id, s))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;

    Ok(Question {
        id: id.to_string(),
        body: body.to_string(),
        qtype,
        gold_documents,
        gold_snippets,
    })
}

fn convert_snippet(index: usize, qid: &str, raw: &RawSnippet) -> Result<Snippet, BioasqError> {
    let text = raw
        .text
        .as_deref()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| schema(index, format!("question {qid}: snippet without text")))?;
    let document_id = raw
        .document
        .as_deref()
        .and_then(pmid_from_url)
        .ok_or_else(|| schema(index, format!("question {qid}: snippet without valid document")))?;
    let section = match raw.begin_section.as_deref() {
        Some("title") => SnippetSection::Title,
        _ => SnippetSection::Abstract,
    };
    let begin_offset = raw.offset_in_begin_section.unwrap_or(0);
    let end_offset = raw
        .offset_in_end_section
        .unwrap_or(begin_offset + text.chars().count());
    if begin_offset > end_offset {
        return Err(schema(
            index,
            format!("question {qid}: snippet offsets {begin_offset} > {end_offset}"),
        ));
    }
    Ok(Snippet {
        document_id,
        text: text.to_string(),
        section,
        begin_offset,
        end_offset,
    })
}

/// Parses a BioASQ JSON document held in memory.
pub fn parse_questions(text: &str) -> Result<Vec<Question>, BioasqError> {
    let raw: RawFile = serde_json::from_str(text)?;
    raw.questions
        .iter()
        .enumerate()
        .map(|(i, q)| convert_question(i, q))
        .collect()
}

pub fn load_questions(path: &Path) -> Result<Vec<Question>, BioasqError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_questions(&text)
}

/// Gold exact answer as distributed: a verdict, or a list of items where
/// each item is a list of acceptable synonyms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldExact {
    YesNo(Verdict),
    Items(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRecord {
    pub question: Question,
    pub exact: Option<GoldExact>,
}

fn decode_gold_exact(qtype: QuestionType, value: &Value) -> Option<GoldExact> {
    match qtype {
        QuestionType::Summary => None,
        QuestionType::Yesno => value
            .as_str()
            .and_then(|s| s.trim().to_ascii_lowercase().parse().ok())
            .map(GoldExact::YesNo),
        QuestionType::Factoid | QuestionType::List => {
            let items = value.as_array()?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let synonyms: Vec<String> = match item {
                    Value::String(s) => vec![s.clone()],
                    Value::Array(inner) => inner
                        .iter()
                        .filter_map(|v| v.as_str().map(str::to_string))
                        .collect(),
                    _ => continue,
                };
                if !synonyms.is_empty() {
                    out.push(synonyms);
                }
            }
            // Some factoid gold files list synonyms of one answer as a flat array.
            if qtype == QuestionType::Factoid && items.iter().all(Value::is_string) && !out.is_empty() {
                out = vec![out.into_iter().flatten().collect()];
            }
            Some(GoldExact::Items(out))
        }
    }
}

/// Loads a gold file: questions plus their exact answers where present.
pub fn load_gold(path: &Path) -> Result<Vec<GoldRecord>, BioasqError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_gold(&text)
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldRecord>, BioasqError> {
    let raw: RawFile = serde_json::from_str(text)?;
    raw.questions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let question = convert_question(i, q)?;
            let exact = q
                .exact_answer
                .as_ref()
                .and_then(|v| decode_gold_exact(question.qtype, v));
            Ok(GoldRecord { question, exact })
        })
        .collect()
}

/// Everything the pipelines produced for one question.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuestionResult {
    /// Bare PMIDs, best first.
    pub documents: Option<Vec<String>>,
    pub exact: Option<ExactAnswer>,
    pub ideal: Option<String>,
}

#[derive(Serialize)]
struct OutFile<'a> {
    questions: Vec<OutQuestion<'a>>,
}

#[derive(Serialize)]
struct OutQuestion<'a> {
    id: &'a str,
    #[serde(rename = "type")]
    qtype: QuestionType,
    body: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    documents: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snippets: Option<Vec<Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_answer: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ideal_answer: Option<&'a str>,
}

/// BioASQ wire shape of an exact answer; `None` for summaries.
pub fn encode_exact(answer: &ExactAnswer) -> Option<Value> {
    let singletons = |entries: &[String]| {
        Value::Array(
            entries
                .iter()
                .map(|e| Value::Array(vec![Value::String(e.clone())]))
                .collect(),
        )
    };
    match answer {
        ExactAnswer::YesNo(v) => Some(Value::String(v.as_str().to_string())),
        ExactAnswer::Factoid(entries) | ExactAnswer::List(entries) => Some(singletons(entries)),
        ExactAnswer::Summary => None,
    }
}

/// Renders the submission document. Entries follow the question order; only
/// questions that have a result are emitted.
pub fn render_submission(
    questions: &[Question],
    results: &BTreeMap<String, QuestionResult>,
) -> Result<String, BioasqError> {
    let known: HashSet<&str> = questions.iter().map(|q| q.id.as_str()).collect();
    if let Some(unknown) = results.keys().find(|id| !known.contains(id.as_str())) {
        return Err(BioasqError::UnknownQuestionId(unknown.clone()));
    }
    let out = OutFile {
        questions: questions
            .iter()
            .filter_map(|q| {
                let r = results.get(&q.id)?;
                Some(OutQuestion {
                    id: &q.id,
                    qtype: q.qtype,
                    body: &q.body,
                    documents: r
                        .documents
                        .as_ref()
                        .map(|d| d.iter().map(|p| pmid_to_url(p)).collect()),
                    snippets: r.documents.as_ref().map(|_| Vec::new()),
                    exact_answer: r.exact.as_ref().and_then(encode_exact),
                    ideal_answer: r.ideal.as_deref(),
                })
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    Ok(text)
}

pub fn write_submission(
    questions: &[Question],
    results: &BTreeMap<String, QuestionResult>,
    path: &Path,
) -> Result<(), BioasqError> {
    let text = render_submission(questions, results)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// One entry of a submission file read back in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionEntry {
    pub id: String,
    pub qtype: Option<QuestionType>,
    pub result: QuestionResult,
}

#[derive(Deserialize)]
struct RawSubmission {
    questions: Vec<RawSubmissionEntry>,
}

#[derive(Deserialize)]
struct RawSubmissionEntry {
    id: String,
    #[serde(rename = "type")]
    qtype: Option<String>,
    documents: Option<Vec<String>>,
    exact_answer: Option<Value>,
    ideal_answer: Option<Value>,
}

fn decode_entries(value: &Value) -> Option<Vec<String>> {
    value
        .as_array()?
        .iter()
        .map(|item| match item {
            Value::String(s) => Some(s.clone()),
            Value::Array(inner) => inner.first().and_then(Value::as_str).map(str::to_string),
            _ => None,
        })
        .collect()
}

fn decode_ideal(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => items.first().and_then(Value::as_str).map(str::to_string),
        _ => None,
    }
}

pub fn parse_submission(text: &str) -> Result<Vec<SubmissionEntry>, BioasqError> {
    let raw: RawSubmission = serde_json::from_str(text)?;
    raw.questions
        .into_iter()
        .enumerate()
        .map(|(index, e)| {
            let qtype = e
                .qtype
                .as_deref()
                .map(|t| t.parse::<QuestionType>())
                .transpose()
                .map_err(|m| schema(index, m))?;
            let documents = e
                .documents
                .map(|docs| {
                    docs.iter()
                        .map(|d| {
                            pmid_from_url(d)
                                .ok_or_else(|| schema(index, format!("bad document URL {d:?}")))
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()?;
            let exact = match (qtype, e.exact_answer.as_ref()) {
                (Some(QuestionType::Yesno), Some(v)) => v
                    .as_str()
                    .and_then(|s| s.parse::<Verdict>().ok())
                    .map(ExactAnswer::YesNo),
                (Some(QuestionType::Factoid), Some(v)) => decode_entries(v).map(ExactAnswer::Factoid),
                (Some(QuestionType::List), Some(v)) => decode_entries(v).map(ExactAnswer::List),
                _ => None,
            };
            Ok(SubmissionEntry {
                id: e.id,
                qtype,
                result: QuestionResult {
                    documents,
                    exact,
                    ideal: e.ideal_answer.as_ref().and_then(decode_ideal),
                },
            })
        })
        .collect()
}

pub fn load_submission(path: &Path) -> Result<Vec<SubmissionEntry>, BioasqError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_submission(&text)
}

/// Guard used by writers of derived files: every PMID must be digits only.
pub fn all_pmids_valid(pmids: &[String]) -> bool {
    pmids.iter().all(|p| is_valid_pmid(p))
}
