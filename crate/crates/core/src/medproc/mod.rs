//! Spanish clinical procedure extraction, linking to SNOMED CT codes, and
//! document indexing.

mod gazetteer;
mod tsv;

pub use gazetteer::{
    levenshtein, link, load_gazetteer, normalized_distance, parse_gazetteer, stem, Gazetteer,
    GazetteerEntry, LinkMatch,
};
pub use tsv::{
    parse_indexing_tsv, parse_mentions_tsv, render_el_tsv, render_indexing_tsv, render_ner_tsv,
    EL_HEADER, INDEXING_HEADER, NER_HEADER, NO_CODE, PROCEDURE_LABEL,
};

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answer::{parse_json_string_array, ParseError};
use crate::llm::{profile_for, ChatExchange, ChatMessage, Gateway, GatewayError, Step};
use crate::prompts::{procedure_extraction_prompt, system_prompt, Task};
use crate::text::python_json_dumps;

#[derive(Debug, Clone, thiserror::Error)]
pub enum MedprocError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("gazetteer header has no column {0:?}")]
    MissingColumn(String),
    #[error("malformed TSV: {0}")]
    Tsv(String),
    #[error("invalid few-shot examples: {0}")]
    Examples(String),
    #[error("expected {expected} few-shot examples, got {got}")]
    ExampleCount { expected: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// A located procedure span. Offsets count Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub document_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub code: Option<String>,
}

impl Mention {
    /// True when `document[start..end)` (in chars) is exactly `text`.
    pub fn matches(&self, document: &str) -> bool {
        self.start < self.end
            && document.chars().skip(self.start).take(self.end - self.start).eq(self.text.chars())
            && document.chars().count() >= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(alias = "text", alias = "input")]
    pub input_text: String,
    #[serde(alias = "procedures", alias = "output")]
    pub output_procedures: Vec<String>,
}

pub fn parse_examples(text: &str) -> Result<Vec<FewShotExample>, MedprocError> {
    serde_json::from_str(text).map_err(|e| MedprocError::Examples(e.to_string()))
}

pub fn load_examples(path: &Path) -> Result<Vec<FewShotExample>, MedprocError> {
    let text = std::fs::read_to_string(path).map_err(|e| MedprocError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_examples(&text)
}

/// System prompt, one user/assistant pair per example, then the document.
pub fn extraction_messages(document: &str, examples: &[FewShotExample]) -> Vec<ChatMessage> {
    let mut messages = vec![system_prompt(Task::Medprocner)];
    for ex in examples {
        messages.push(ChatMessage::user(procedure_extraction_prompt(&ex.input_text)));
        messages.push(ChatMessage::assistant(python_json_dumps(&ex.output_procedures)));
    }
    messages.push(ChatMessage::user(procedure_extraction_prompt(document)));
    messages
}

fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Char offsets of every case-insensitive, non-overlapping occurrence of
/// `needle`, scanning left to right.
pub fn find_occurrences(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    let hay: Vec<char> = haystack.chars().map(fold).collect();
    let pat: Vec<char> = needle.chars().map(fold).collect();
    let mut out = Vec::new();
    if pat.is_empty() || pat.len() > hay.len() {
        return out;
    }
    let mut i = 0;
    while i + pat.len() <= hay.len() {
        if hay[i..i + pat.len()] == pat[..] {
            out.push((i, i + pat.len()));
            i += pat.len();
        } else {
            i += 1;
        }
    }
    out
}

/// Mentions for each surface form, sorted by offset. A span already claimed
/// by an earlier form is not annotated again. Forms that do not occur, or
/// that contain tabs or line breaks, are returned as dropped.
pub fn localize(
    document_id: &str,
    document: &str,
    forms: &[String],
) -> (Vec<Mention>, Vec<String>) {
    let chars: Vec<char> = document.chars().collect();
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut mentions = Vec::new();
    let mut dropped = Vec::new();
    for form in forms {
        if form.contains(['\t', '\n', '\r']) {
            dropped.push(form.clone());
            continue;
        }
        let spans = find_occurrences(document, form);
        if spans.is_empty() {
            dropped.push(form.clone());
            continue;
        }
        for (start, end) in spans {
            if claimed.iter().any(|&(s, e)| start < e && s < end) {
                continue;
            }
            claimed.push((start, end));
            mentions.push(Mention {
                document_id: document_id.to_string(),
                start,
                end,
                text: chars[start..end].iter().collect(),
                code: None,
            });
        }
    }
    mentions.sort();
    (mentions, dropped)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub mentions: Vec<Mention>,
    /// Surface forms from the model that could not be placed in the text.
    pub dropped: Vec<String>,
}

pub struct ProcedureExtractor<'g> {
    gateway: &'g Gateway,
    model_id: String,
    examples: Vec<FewShotExample>,
}

impl<'g> ProcedureExtractor<'g> {
    /// Fails unless exactly `expected_examples` examples are given.
    pub fn new(
        gateway: &'g Gateway,
        model_id: impl Into<String>,
        examples: Vec<FewShotExample>,
        expected_examples: usize,
    ) -> Result<Self, MedprocError> {
        if examples.len() != expected_examples {
            return Err(MedprocError::ExampleCount {
                expected: expected_examples,
                got: examples.len(),
            });
        }
        Ok(ProcedureExtractor {
            gateway,
            model_id: model_id.into(),
            examples,
        })
    }

    pub fn extract(&self, document_id: &str, document: &str) -> Result<Extraction, MedprocError> {
        let mut exchange = ChatExchange::new(
            self.model_id.clone(),
            extraction_messages(document, &self.examples),
            profile_for(Step::Answering),
        );
        let reply = self.gateway.complete(&mut exchange)?;
        let forms = parse_json_string_array(&reply)?;
        let (mentions, dropped) = localize(document_id, document, &forms);
        for form in &dropped {
            log::warn!("{document_id}: dropping procedure {form:?} not found in text");
        }
        Ok(Extraction { mentions, dropped })
    }
}

/// Sets each mention's code from the gazetteer.
pub fn link_mentions(mentions: &mut [Mention], gazetteer: &Gazetteer, threshold: f64) {
    for m in mentions {
        m.code = gazetteer.link(&m.text, threshold);
    }
}

/// Sorted, duplicate-free set of the linked codes.
pub fn index_document(mentions: &[Mention]) -> BTreeSet<String> {
    mentions.iter().filter_map(|m| m.code.clone()).collect()
}
