//! Answer generation for the four BioASQ formats.
//!
//! Every question gets an ideal answer; yes/no, factoid and list questions
//! also get an exact answer. Prompts are grounded with gold snippets when a
//! context is supplied and degrade to the bare question otherwise; nothing
//! else differs between the two modes.

mod parse;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::llm::{profile_for, ChatExchange, ChatMessage, Gateway, GatewayError, Step};
use crate::prompts::{self, system_prompt, Task};
use crate::types::{Question, QuestionType, Snippet};

pub use parse::{first_balanced_array, normalize_yesno, parse_json_string_array, ParseError};

pub const MAX_FACTOID_ENTRIES: usize = 5;
pub const MAX_LIST_ENTRIES: usize = 100;
pub const MAX_LIST_ENTRY_CHARS: usize = 100;
pub const MAX_IDEAL_WORDS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Yes => "yes",
            Verdict::No => "no",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes" => Ok(Verdict::Yes),
            "no" => Ok(Verdict::No),
            other => Err(format!("not a verdict: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ExactAnswer {
    YesNo(Verdict),
    Factoid(Vec<String>),
    List(Vec<String>),
    Summary,
}

impl ExactAnswer {
    /// Size and length limits of the challenge format.
    pub fn satisfies_limits(&self) -> bool {
        match self {
            ExactAnswer::YesNo(_) | ExactAnswer::Summary => true,
            ExactAnswer::Factoid(e) => e.len() <= MAX_FACTOID_ENTRIES,
            ExactAnswer::List(e) => {
                e.len() <= MAX_LIST_ENTRIES
                    && e.iter().all(|s| s.chars().count() <= MAX_LIST_ENTRY_CHARS)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdealAnswer {
    pub text: String,
}

impl IdealAnswer {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnswerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("question {id} is {actual}, expected {expected}")]
    WrongType {
        id: String,
        expected: QuestionType,
        actual: QuestionType,
    },
}

/// Snippet texts in the given order, one per line.
pub fn build_context(snippets: &[Snippet]) -> String {
    snippets
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Keeps everything up to the end of the `max_words`-th whitespace token.
pub fn truncate_words(text: &str, max_words: usize) -> &str {
    let mut seen = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word && seen == max_words {
                return &text[..i];
            }
            in_word = false;
        } else if !in_word {
            in_word = true;
            seen += 1;
        }
    }
    text
}

/// Case-insensitive dedup keeping first occurrences, then the count cap.
fn dedup_and_cap(entries: Vec<String>, cap: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .filter(|e| seen.insert(e.to_lowercase()))
        .take(cap)
        .collect()
}

fn truncate_chars(s: String, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((cut, _)) => s[..cut].trim_end().to_string(),
        None => s,
    }
}

/// Everything produced for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerBundle {
    pub exact: ExactAnswer,
    pub ideal: IdealAnswer,
}

pub struct Answerer<'g> {
    gateway: &'g Gateway,
    model_id: String,
}

impl<'g> Answerer<'g> {
    pub fn new(gateway: &'g Gateway, model_id: impl Into<String>) -> Self {
        Answerer {
            gateway,
            model_id: model_id.into(),
        }
    }

    fn ask(&self, prompt: String) -> Result<String, AnswerError> {
        let mut exchange = ChatExchange::new(
            self.model_id.clone(),
            vec![system_prompt(Task::Bioasq), ChatMessage::user(prompt)],
            profile_for(Step::Answering),
        );
        let text = self.gateway.complete(&mut exchange)?;
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(AnswerError::EmptyCompletion);
        }
        Ok(trimmed.to_string())
    }

    fn expect_type(question: &Question, expected: QuestionType) -> Result<(), AnswerError> {
        if question.qtype == expected {
            Ok(())
        } else {
            Err(AnswerError::WrongType {
                id: question.id.clone(),
                expected,
                actual: question.qtype,
            })
        }
    }

    pub fn answer_ideal(&self, question: &Question, context: &str) -> Result<IdealAnswer, AnswerError> {
        let text = self.ask(prompts::ideal_prompt(context, &question.body))?;
        Ok(IdealAnswer {
            text: truncate_words(&text, MAX_IDEAL_WORDS).to_string(),
        })
    }

    pub fn answer_yesno(&self, question: &Question, context: &str) -> Result<ExactAnswer, AnswerError> {
        Self::expect_type(question, QuestionType::Yesno)?;
        let raw = self.ask(prompts::yesno_prompt(context, &question.body))?;
        Ok(ExactAnswer::YesNo(normalize_yesno(&raw)?))
    }

    pub fn answer_factoid(&self, question: &Question, context: &str) -> Result<ExactAnswer, AnswerError> {
        Self::expect_type(question, QuestionType::Factoid)?;
        let raw = self.ask(prompts::factoid_prompt(context, &question.body))?;
        let entries = parse_json_string_array(&raw)?;
        Ok(ExactAnswer::Factoid(dedup_and_cap(entries, MAX_FACTOID_ENTRIES)))
    }

    pub fn answer_list(&self, question: &Question, context: &str) -> Result<ExactAnswer, AnswerError> {
        Self::expect_type(question, QuestionType::List)?;
        let raw = self.ask(prompts::list_prompt(context, &question.body))?;
        let entries = parse_json_string_array(&raw)?;
        Ok(ExactAnswer::List(
            dedup_and_cap(entries, MAX_LIST_ENTRIES)
                .into_iter()
                .map(|e| truncate_chars(e, MAX_LIST_ENTRY_CHARS))
                .collect(),
        ))
    }

    /// Exact answer by type, then the ideal answer. `grounded = false` sends
    /// an empty context regardless of the question's snippets.
    pub fn answer(&self, question: &Question, grounded: bool) -> Result<AnswerBundle, AnswerError> {
        let context = if grounded {
            build_context(question.snippets())
        } else {
            String::new()
        };
        let exact = match question.qtype {
            QuestionType::Yesno => self.answer_yesno(question, &context)?,
            QuestionType::Factoid => self.answer_factoid(question, &context)?,
            QuestionType::List => self.answer_list(question, &context)?,
            QuestionType::Summary => ExactAnswer::Summary,
        };
        let ideal = self.answer_ideal(question, &context)?;
        Ok(AnswerBundle { exact, ideal })
    }
}
