//! Procedure gazetteer: loading, stemming, and fuzzy linking.

use std::collections::HashMap;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::MedprocError;
use crate::config::GazetteerColumns;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub code: String,
    pub term: String,
    pub semantic_tag: String,
    pub stemmed_term: String,
}

impl GazetteerEntry {
    pub fn new(code: impl Into<String>, term: impl Into<String>, semantic_tag: impl Into<String>) -> Self {
        let term = term.into();
        GazetteerEntry {
            code: code.into(),
            stemmed_term: stem(&term),
            term,
            semantic_tag: semantic_tag.into(),
        }
    }
}

fn stem_token(stemmer: &Stemmer, token: &str) -> String {
    // One Snowball pass is not always idempotent (e.g. "procedimiento" ->
    // "proced" -> "proc"); iterate to a fixpoint so stem(stem(x)) == stem(x).
    let mut current = token.to_string();
    loop {
        let next = stemmer.stem(&current).into_owned();
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Lowercases and applies the Spanish Snowball stemmer to every whitespace
/// token; tokens are rejoined with single spaces.
pub fn stem(term: &str) -> String {
    let stemmer = Stemmer::create(Algorithm::Spanish);
    term.to_lowercase()
        .split_whitespace()
        .map(|t| stem_token(&stemmer, t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Distance divided by the longer length; 0 when both are empty.
pub fn normalized_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatch {
    pub code: String,
    pub distance: usize,
    pub normalized: f64,
}

/// Procedure entries plus an exact-match index over their stems.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    by_stem: HashMap<String, String>,
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>) -> Self {
        let mut by_stem: HashMap<String, String> = HashMap::new();
        for e in &entries {
            by_stem
                .entry(e.stemmed_term.clone())
                .and_modify(|code| {
                    if e.code < *code {
                        *code = e.code.clone();
                    }
                })
                .or_insert_with(|| e.code.clone());
        }
        Gazetteer { entries, by_stem }
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nearest entry in stemmed space if its normalized distance is within
    /// `threshold`. Ties go to the smaller raw distance, then the smaller code.
    pub fn link_detailed(&self, mention_text: &str, threshold: f64) -> Option<LinkMatch> {
        let stemmed = stem(mention_text);
        if let Some(code) = self.by_stem.get(&stemmed) {
            return Some(LinkMatch {
                code: code.clone(),
                distance: 0,
                normalized: 0.0,
            });
        }
        let mention_len = stemmed.chars().count();
        let mut best: Option<(f64, usize, &str)> = None;
        for e in &self.entries {
            let longest = mention_len.max(e.stemmed_term.chars().count());
            // The length difference bounds the distance from below.
            let floor = mention_len.abs_diff(e.stemmed_term.chars().count());
            if longest == 0 || floor as f64 / longest as f64 > threshold {
                continue;
            }
            let d = levenshtein(&stemmed, &e.stemmed_term);
            let candidate = (d as f64 / longest as f64, d, e.code.as_str());
            let better = match best {
                None => true,
                Some(b) => {
                    candidate.0 < b.0
                        || (candidate.0 == b.0 && (candidate.1, candidate.2) < (b.1, b.2))
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        best.filter(|b| b.0 <= threshold).map(|(normalized, distance, code)| LinkMatch {
            code: code.to_string(),
            distance,
            normalized,
        })
    }

    pub fn link(&self, mention_text: &str, threshold: f64) -> Option<String> {
        self.link_detailed(mention_text, threshold).map(|m| m.code)
    }
}

/// Links against a plain entry list; see [`Gazetteer::link_detailed`].
pub fn link(mention_text: &str, gazetteer: &[GazetteerEntry], threshold: f64) -> Option<String> {
    Gazetteer::new(gazetteer.to_vec()).link(mention_text, threshold)
}

/// Reads a tab-separated gazetteer with a header row and keeps the rows
/// whose semantic tag is one of `procedure_tags` (case-insensitive).
pub fn parse_gazetteer(
    text: &str,
    columns: &GazetteerColumns,
    procedure_tags: &[String],
) -> Result<Vec<GazetteerEntry>, MedprocError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| MedprocError::Tsv(e.to_string()))?
        .clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| MedprocError::MissingColumn(name.to_string()))
    };
    let code_at = position(&columns.code)?;
    let term_at = position(&columns.term)?;
    let tag_at = position(&columns.semantic_tag)?;
    let tags: Vec<String> = procedure_tags.iter().map(|t| t.to_lowercase()).collect();

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| MedprocError::Tsv(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let (code, term, tag) = (field(code_at), field(term_at), field(tag_at));
        if code.is_empty() || term.is_empty() || !tags.contains(&tag.to_lowercase()) {
            continue;
        }
        out.push(GazetteerEntry::new(code, term, tag));
    }
    Ok(out)
}

pub fn load_gazetteer(
    path: &Path,
    columns: &GazetteerColumns,
    procedure_tags: &[String],
) -> Result<Vec<GazetteerEntry>, MedprocError> {
    let text = std::fs::read_to_string(path).map_err(|e| MedprocError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_gazetteer(&text, columns, procedure_tags)
}
