//! NCBI eUtils client: relevance-sorted `esearch` with a publication-date
//! cutoff and `efetch` for titles and abstracts.
//!
//! All traffic passes through a shared [`RateLimiter`]; transient failures
//! are retried with the same backoff schedule as the LLM gateway.

mod parse;
mod rate;
mod transport;

use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::llm::{Backoff, Sleeper, ThreadSleeper};
use crate::types::is_valid_pmid;

pub use parse::{parse_efetch, parse_esearch, render_efetch, render_esearch, PayloadError};
pub use rate::{Clock, FakeClock, RateLimiter, SystemClock};
pub use transport::{
    EutilsRequest, FixtureArticle, FixtureTransport, HttpTransport, PubmedCassette,
    RecordingTransport, Transport, TransportError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    pub max_date: NaiveDate,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub pmid: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
}

/// One slot of a fetch result, aligned with the requested PMID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ArticleRecord {
    Found(Article),
    Missing { pmid: String },
}

impl ArticleRecord {
    pub fn pmid(&self) -> &str {
        match self {
            ArticleRecord::Found(a) => &a.pmid,
            ArticleRecord::Missing { pmid } => pmid,
        }
    }

    pub fn article(&self) -> Option<&Article> {
        match self {
            ArticleRecord::Found(a) => Some(a),
            ArticleRecord::Missing { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PubmedError {
    #[error("all {attempts} attempts failed; last error: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("eUtils rejected the query: {0}")]
    QuerySyntaxRejected(String),
    #[error("malformed eUtils payload: {0}")]
    Parse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("eUtils request failed: {0}")]
    Fatal(String),
}

pub struct PubmedClient {
    transport: Arc<dyn Transport>,
    limiter: Arc<RateLimiter>,
    max_retries: u32,
    backoff: Backoff,
    sleeper: Arc<dyn Sleeper>,
}

/// efetch accepts long id lists, but URLs have practical limits.
const FETCH_BATCH: usize = 200;

impl PubmedClient {
    pub fn new(transport: Arc<dyn Transport>, limiter: Arc<RateLimiter>) -> Self {
        PubmedClient {
            transport,
            limiter,
            max_retries: 5,
            backoff: Backoff::new(std::time::Duration::from_secs(1)),
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    pub fn with_retry(mut self, max_retries: u32, backoff: Backoff) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    fn call(&self, request: &EutilsRequest) -> Result<String, PubmedError> {
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            self.limiter.acquire();
            match self.transport.execute(request) {
                Ok(body) => return Ok(body),
                Err(TransportError::Transient(msg)) => {
                    log::warn!("eUtils attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                    if attempt < attempts {
                        self.sleeper
                            .sleep(self.backoff.delay(attempt, rand::random::<f64>()));
                    }
                }
                Err(TransportError::Fatal(msg)) => return Err(PubmedError::Fatal(msg)),
            }
        }
        Err(PubmedError::TransportExhausted { attempts, last })
    }

    /// Up to `limit` PMIDs in PubMed relevance order. No hits is `Ok(vec![])`.
    pub fn search(&self, request: &SearchRequest) -> Result<Vec<String>, PubmedError> {
        if request.query.trim().is_empty() {
            return Err(PubmedError::InvalidRequest("empty query".into()));
        }
        if request.limit == 0 {
            return Err(PubmedError::InvalidRequest("limit must be at least 1".into()));
        }
        let body = self.call(&EutilsRequest::Search(request.clone()))?;
        let mut ids = parse_esearch(&body).map_err(|e| match e {
            PayloadError::Rejected(m) => PubmedError::QuerySyntaxRejected(m),
            PayloadError::Malformed(m) => PubmedError::Parse(m),
        })?;
        let mut seen = std::collections::HashSet::new();
        ids.retain(|id| seen.insert(id.clone()));
        ids.truncate(request.limit);
        Ok(ids)
    }

    /// One record per requested PMID, in request order. PMIDs eUtils did not
    /// return come back as [`ArticleRecord::Missing`].
    pub fn fetch_articles(&self, pmids: &[String]) -> Result<Vec<ArticleRecord>, PubmedError> {
        if pmids.is_empty() {
            return Err(PubmedError::InvalidRequest("no PMIDs to fetch".into()));
        }
        if let Some(bad) = pmids.iter().find(|p| !is_valid_pmid(p)) {
            return Err(PubmedError::InvalidRequest(format!("invalid PMID {bad:?}")));
        }
        let mut by_pmid = std::collections::HashMap::new();
        for chunk in pmids.chunks(FETCH_BATCH) {
            let body = self.call(&EutilsRequest::Fetch {
                pmids: chunk.to_vec(),
            })?;
            for article in parse_efetch(&body).map_err(|e| PubmedError::Parse(e.to_string()))? {
                by_pmid.entry(article.pmid.clone()).or_insert(article);
            }
        }
        Ok(pmids
            .iter()
            .map(|p| match by_pmid.get(p) {
                Some(a) => ArticleRecord::Found(a.clone()),
                None => {
                    log::info!("PMID {p} missing from efetch response");
                    ArticleRecord::Missing { pmid: p.clone() }
                }
            })
            .collect())
    }
}
