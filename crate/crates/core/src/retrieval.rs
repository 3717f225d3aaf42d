//! Document retrieval: expand the question into a PubMed query, search,
//! broaden the query once if nothing came back, then let the model rerank
//! the titles of the hits.
//!
//! In simple mode the question text itself is the query and only the rerank
//! step talks to the model.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::OnceLock;

use crate::config::RunConfig;
use crate::llm::{profile_for, ChatExchange, ChatMessage, Gateway, GatewayError, Step};
use crate::prompts::{self, system_prompt, Task};
use crate::pubmed::{PubmedClient, PubmedError, SearchRequest};
use crate::text::clean_completion;
use crate::types::Question;

pub const DEFAULT_OUTPUT_LIMIT: usize = 10;

#[derive(Debug, Clone, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Pubmed(#[from] PubmedError),
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("no index in rerank reply {0:?}")]
    MalformedReply(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Expanded,
    Simple,
}

/// Everything that happened while retrieving documents for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub question_id: String,
    pub mode: RetrievalMode,
    pub expanded_query: Option<String>,
    pub reformulated_query: Option<String>,
    /// Relevance-ordered PMIDs from the last search that ran.
    pub raw_hits: Vec<String>,
    /// Hits efetch returned no record for; excluded from reranking.
    pub missing_pmids: Vec<String>,
    pub rerank_requested: usize,
    pub rerank_reply: String,
    /// 1-based indices into the titled hits, as accepted from the reply.
    pub rerank_indices: Vec<usize>,
    /// Reply tokens that were out of range or repeated.
    pub dropped_tokens: Vec<String>,
    /// Why relevance order was used instead of the model's ranking.
    pub fallback: Option<String>,
    pub search_errors: Vec<String>,
    pub final_documents: Vec<String>,
}

/// Parsed rerank reply plus the tokens that were discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankParse {
    pub indices: Vec<usize>,
    pub dropped: Vec<String>,
}

fn integer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("valid regex"))
}

/// Reads integers in reply order, keeping those in `1..=n` the first time
/// they appear, at most `min(limit, n)` of them.
pub fn parse_rerank_reply_with_limit(
    reply: &str,
    n: usize,
    limit: usize,
) -> Result<RerankParse, RetrievalError> {
    if n == 0 {
        return Err(RetrievalError::Precondition("rerank over zero articles".into()));
    }
    let cap = limit.min(n);
    let mut seen = HashSet::new();
    let mut indices = Vec::new();
    let mut dropped = Vec::new();
    let mut any = false;
    for m in integer_re().find_iter(reply) {
        any = true;
        let token = m.as_str();
        match token.parse::<usize>() {
            Ok(i) if (1..=n).contains(&i) && indices.len() < cap && seen.insert(i) => indices.push(i),
            _ => dropped.push(token.to_string()),
        }
    }
    if !any {
        return Err(RetrievalError::MalformedReply(reply.chars().take(120).collect()));
    }
    Ok(RerankParse { indices, dropped })
}

/// [`parse_rerank_reply_with_limit`] with the standard ten-document cap.
pub fn parse_rerank_reply(reply: &str, n: usize) -> Result<Vec<usize>, RetrievalError> {
    parse_rerank_reply_with_limit(reply, n, DEFAULT_OUTPUT_LIMIT).map(|p| p.indices)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalSettings {
    pub model_id: String,
    pub mode: RetrievalMode,
    pub max_date: chrono::NaiveDate,
    pub search_limit: usize,
    pub output_limit: usize,
}

impl From<&RunConfig> for RetrievalSettings {
    fn from(c: &RunConfig) -> Self {
        RetrievalSettings {
            model_id: c.model_id.clone(),
            mode: if c.expansion_enabled {
                RetrievalMode::Expanded
            } else {
                RetrievalMode::Simple
            },
            max_date: c.max_date,
            search_limit: c.search_limit,
            output_limit: c.output_limit,
        }
    }
}

pub struct Retriever<'a> {
    gateway: &'a Gateway,
    pubmed: &'a PubmedClient,
    settings: RetrievalSettings,
}

impl<'a> Retriever<'a> {
    pub fn new(gateway: &'a Gateway, pubmed: &'a PubmedClient, settings: RetrievalSettings) -> Self {
        Retriever {
            gateway,
            pubmed,
            settings,
        }
    }

    fn ask(&self, prompt: String, step: Step) -> Result<String, RetrievalError> {
        let mut exchange = ChatExchange::new(
            self.settings.model_id.clone(),
            vec![system_prompt(Task::Bioasq), ChatMessage::user(prompt)],
            profile_for(step),
        );
        Ok(self.gateway.complete(&mut exchange)?)
    }

    fn ask_for_query(&self, prompt: String, step: Step) -> Result<String, RetrievalError> {
        let query = clean_completion(&self.ask(prompt, step)?);
        if query.is_empty() {
            return Err(RetrievalError::EmptyCompletion);
        }
        Ok(query)
    }

    pub fn expand_query(&self, question: &Question) -> Result<String, RetrievalError> {
        if question.body.trim().is_empty() {
            return Err(RetrievalError::Precondition("empty question body".into()));
        }
        self.ask_for_query(prompts::expansion_prompt(&question.body), Step::Expansion)
    }

    /// Only valid after `original_query` produced no hits.
    pub fn reformulate_query(
        &self,
        question: &Question,
        original_query: &str,
        original_hits: &[String],
    ) -> Result<String, RetrievalError> {
        if !original_hits.is_empty() {
            return Err(RetrievalError::Precondition(format!(
                "reformulation requested although the query returned {} hits",
                original_hits.len()
            )));
        }
        self.ask_for_query(
            prompts::reformulation_prompt(&question.body, original_query),
            Step::Reformulation,
        )
    }

    /// A rejected query counts as zero hits so the fallback can still run.
    fn search(&self, query: &str, errors: &mut Vec<String>) -> Result<Vec<String>, RetrievalError> {
        let request = SearchRequest {
            query: query.to_string(),
            max_date: self.settings.max_date,
            limit: self.settings.search_limit,
        };
        match self.pubmed.search(&request) {
            Ok(hits) => Ok(hits),
            Err(PubmedError::QuerySyntaxRejected(msg)) => {
                errors.push(format!("{query}: {msg}"));
                Ok(Vec::new())
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn retrieve(&self, question: &Question) -> Result<RetrievalTrace, RetrievalError> {
        let mut trace = RetrievalTrace {
            question_id: question.id.clone(),
            mode: self.settings.mode,
            expanded_query: None,
            reformulated_query: None,
            raw_hits: Vec::new(),
            missing_pmids: Vec::new(),
            rerank_requested: 0,
            rerank_reply: String::new(),
            rerank_indices: Vec::new(),
            dropped_tokens: Vec::new(),
            fallback: None,
            search_errors: Vec::new(),
            final_documents: Vec::new(),
        };

        let hits = match self.settings.mode {
            RetrievalMode::Simple => self.search(&question.body, &mut trace.search_errors)?,
            RetrievalMode::Expanded => {
                let query = self.expand_query(question)?;
                trace.expanded_query = Some(query.clone());
                let first = self.search(&query, &mut trace.search_errors)?;
                if first.is_empty() {
                    let broader = self.reformulate_query(question, &query, &first)?;
                    trace.reformulated_query = Some(broader.clone());
                    self.search(&broader, &mut trace.search_errors)?
                } else {
                    first
                }
            }
        };
        trace.raw_hits = hits;
        if trace.raw_hits.is_empty() {
            return Ok(trace);
        }

        let records = self.pubmed.fetch_articles(&trace.raw_hits)?;
        let mut titled = Vec::new();
        for r in &records {
            match r.article() {
                Some(a) => titled.push(a),
                None => trace.missing_pmids.push(r.pmid().to_string()),
            }
        }
        if titled.is_empty() {
            trace.fallback = Some("no titles available".into());
            trace.final_documents = trace
                .raw_hits
                .iter()
                .take(self.settings.output_limit)
                .cloned()
                .collect();
            return Ok(trace);
        }

        let n = titled.len();
        let wanted = self.settings.output_limit.min(n);
        trace.rerank_requested = wanted;
        let titles: Vec<&str> = titled.iter().map(|a| a.title.as_str()).collect();
        let prompt = prompts::rerank_prompt(&prompts::articles_list(&titles), &question.body, wanted);
        trace.rerank_reply = self.ask(prompt, Step::Reranking)?;

        match parse_rerank_reply_with_limit(&trace.rerank_reply, n, wanted) {
            Ok(parsed) if !parsed.indices.is_empty() => {
                trace.final_documents = parsed
                    .indices
                    .iter()
                    .map(|&i| titled[i - 1].pmid.clone())
                    .collect();
                trace.rerank_indices = parsed.indices;
                trace.dropped_tokens = parsed.dropped;
            }
            Ok(parsed) => {
                trace.dropped_tokens = parsed.dropped;
                trace.fallback = Some("no usable index in rerank reply".into());
            }
            Err(e) => trace.fallback = Some(e.to_string()),
        }
        if trace.fallback.is_some() {
            trace.final_documents = titled.iter().take(wanted).map(|a| a.pmid.clone()).collect();
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rerank_reply_examples() {
        assert_eq!(parse_rerank_reply("1, 2, 3, 4", 50).unwrap(), [1, 2, 3, 4]);
        assert_eq!(parse_rerank_reply("3, 99, 3, 1", 50).unwrap(), [3, 1]);
        assert!(matches!(
            parse_rerank_reply("no relevant articles", 10),
            Err(RetrievalError::MalformedReply(_))
        ));
        let many = (1..=30).map(|i| i.to_string()).collect::<Vec<_>>().join(", ");
        assert_eq!(parse_rerank_reply(&many, 50).unwrap().len(), 10);
        assert_eq!(parse_rerank_reply(&many, 4).unwrap(), [1, 2, 3, 4]);
        assert_eq!(parse_rerank_reply("0, 2", 3).unwrap(), [2]);
        assert_eq!(
            parse_rerank_reply("99999999999999999999999, 2", 3).unwrap(),
            [2]
        );
    }

    #[test]
    fn dropped_tokens_are_reported() {
        let p = parse_rerank_reply_with_limit("'2, 2, 7, 1'", 5, 10).unwrap();
        assert_eq!(p.indices, [2, 1]);
        assert_eq!(p.dropped, ["2", "7"]);
    }
}
