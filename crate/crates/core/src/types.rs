//! Domain values shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// BioASQ question format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Yesno,
    Factoid,
    List,
    Summary,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Yesno => "yesno",
            QuestionType::Factoid => "factoid",
            QuestionType::List => "list",
            QuestionType::Summary => "summary",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yesno" => Ok(QuestionType::Yesno),
            "factoid" => Ok(QuestionType::Factoid),
            "list" => Ok(QuestionType::List),
            "summary" => Ok(QuestionType::Summary),
            other => Err(format!("unknown question type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnippetSection {
    Title,
    Abstract,
}

/// A gold passage taken from a PubMed title or abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    /// Bare PMID.
    pub document_id: String,
    pub text: String,
    pub section: SnippetSection,
    pub begin_offset: usize,
    pub end_offset: usize,
}

/// One BioASQ question with whatever gold material came with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub body: String,
    pub qtype: QuestionType,
    /// Bare PMIDs in the order given by the file.
    pub gold_documents: Option<Vec<String>>,
    pub gold_snippets: Option<Vec<Snippet>>,
}

impl Question {
    pub fn new(id: impl Into<String>, body: impl Into<String>, qtype: QuestionType) -> Self {
        Question {
            id: id.into(),
            body: body.into(),
            qtype,
            gold_documents: None,
            gold_snippets: None,
        }
    }

    pub fn snippets(&self) -> &[Snippet] {
        self.gold_snippets.as_deref().unwrap_or(&[])
    }
}

/// Sampling parameters sent with every chat completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationProfile {
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl GenerationProfile {
    pub const fn new(temperature: f64, frequency_penalty: f64, presence_penalty: f64) -> Self {
        GenerationProfile {
            temperature,
            frequency_penalty,
            presence_penalty,
        }
    }

    pub fn penalties_in_range(&self) -> bool {
        (-2.0..=2.0).contains(&self.frequency_penalty)
            && (-2.0..=2.0).contains(&self.presence_penalty)
    }
}

const PUBMED_URL_PREFIX: &str = "http://www.ncbi.nlm.nih.gov/pubmed/";

/// A syntactically valid PMID is nonempty decimal digits.
pub fn is_valid_pmid(pmid: &str) -> bool {
    !pmid.is_empty() && pmid.bytes().all(|b| b.is_ascii_digit())
}

pub fn pmid_to_url(pmid: &str) -> String {
    format!("{PUBMED_URL_PREFIX}{pmid}")
}

/// Accepts the canonical URL form, its https variant, or a bare PMID.
pub fn pmid_from_url(url: &str) -> Option<String> {
    let trimmed = url.trim().trim_end_matches('/');
    let tail = if is_valid_pmid(trimmed) {
        trimmed
    } else {
        let rest = trimmed
            .strip_prefix("http://")
            .or_else(|| trimmed.strip_prefix("https://"))?;
        let rest = rest.strip_prefix("www.").unwrap_or(rest);
        rest.strip_prefix("ncbi.nlm.nih.gov/pubmed/")
            .or_else(|| rest.strip_prefix("pubmed.ncbi.nlm.nih.gov/"))?
    };
    is_valid_pmid(tail).then(|| tail.to_string())
}
