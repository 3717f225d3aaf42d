use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::parse::{parse_efetch, parse_esearch, render_efetch, render_esearch};
use super::{Article, SearchRequest};

/// A single eUtils call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EutilsRequest {
    Search(SearchRequest),
    Fetch { pmids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
}

/// Returns the raw response body for a request.
pub trait Transport: Send + Sync {
    fn execute(&self, request: &EutilsRequest) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    date_type: String,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, date_type: &str, timeout: Duration) -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            date_type: date_type.to_string(),
        }
    }

    /// Endpoint and query parameters for a request. The API key, when set,
    /// is appended last.
    pub fn params(&self, request: &EutilsRequest) -> (String, Vec<(String, String)>) {
        let p = |k: &str, v: String| (k.to_string(), v);
        let (endpoint, mut params) = match request {
            EutilsRequest::Search(s) => (
                format!("{}/esearch.fcgi", self.base_url),
                vec![
                    p("db", "pubmed".into()),
                    p("term", s.query.clone()),
                    p("sort", "relevance".into()),
                    p("retmax", s.limit.to_string()),
                    p("datetype", self.date_type.clone()),
                    // eUtils ignores maxdate unless mindate is also present.
                    p("mindate", "1000/01/01".into()),
                    p("maxdate", s.max_date.format("%Y/%m/%d").to_string()),
                    p("retmode", "json".into()),
                ],
            ),
            EutilsRequest::Fetch { pmids } => (
                format!("{}/efetch.fcgi", self.base_url),
                vec![
                    p("db", "pubmed".into()),
                    p("id", pmids.join(",")),
                    p("retmode", "xml".into()),
                ],
            ),
        };
        if let Some(key) = &self.api_key {
            params.push(p("api_key", key.clone()));
        }
        (endpoint, params)
    }
}

impl Transport for HttpTransport {
    fn execute(&self, request: &EutilsRequest) -> Result<String, TransportError> {
        let (endpoint, params) = self.params(request);
        let mut req = self.agent.get(&endpoint);
        for (k, v) in &params {
            req = req.query(k, v);
        }
        match req.call() {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| TransportError::Transient(e.to_string())),
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", body.chars().take(300).collect::<String>());
                if code == 429 || code >= 500 {
                    Err(TransportError::Transient(msg))
                } else if code == 400 && body.trim_start().starts_with('{') {
                    // eUtils reports query errors as JSON bodies on 400.
                    Ok(body)
                } else {
                    Err(TransportError::Fatal(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient(t.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureArticle {
    pub title: String,
    #[serde(default, rename = "abstract", skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
}

/// Recorded PubMed state. Searches are keyed by the query text and store the
/// full relevance-ordered hit list; the client applies the limit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PubmedCassette {
    #[serde(default)]
    pub searches: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub search_errors: BTreeMap<String, String>,
    #[serde(default)]
    pub articles: BTreeMap<String, FixtureArticle>,
    /// PMIDs that efetch returned nothing for.
    #[serde(default)]
    pub missing: BTreeSet<String>,
}

impl PubmedCassette {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".pubmed-cassette.{}.tmp", std::process::id()));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(self)?)?;
            f.sync_all()?;
        }
        std::fs::rename(tmp, path)
    }

    pub fn add_search(&mut self, query: &str, pmids: &[&str]) -> &mut Self {
        self.searches
            .insert(query.to_string(), pmids.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn add_article(&mut self, pmid: &str, title: &str) -> &mut Self {
        self.articles.insert(
            pmid.to_string(),
            FixtureArticle {
                title: title.to_string(),
                abstract_text: None,
            },
        );
        self
    }

    fn answer(&self, request: &EutilsRequest) -> Option<String> {
        match request {
            EutilsRequest::Search(s) => {
                if let Some(msg) = self.search_errors.get(&s.query) {
                    return Some(serde_json::json!({"esearchresult": {"ERROR": msg}}).to_string());
                }
                self.searches.get(&s.query).map(|ids| render_esearch(ids))
            }
            EutilsRequest::Fetch { pmids } => {
                let known = pmids
                    .iter()
                    .all(|p| self.articles.contains_key(p) || self.missing.contains(p));
                known.then(|| {
                    let found: Vec<Article> = pmids
                        .iter()
                        .filter_map(|p| {
                            self.articles.get(p).map(|a| Article {
                                pmid: p.clone(),
                                title: a.title.clone(),
                                abstract_text: a.abstract_text.clone(),
                            })
                        })
                        .collect();
                    render_efetch(&found)
                })
            }
        }
    }
}

/// Serves eUtils-shaped payloads from a cassette; never touches the network.
/// A fetch for PMIDs the cassette does not know returns only the known ones,
/// like efetch does for withdrawn records.
pub struct FixtureTransport {
    cassette: PubmedCassette,
}

impl FixtureTransport {
    pub fn new(cassette: PubmedCassette) -> Self {
        FixtureTransport { cassette }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        if !path.exists() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("fixture {} does not exist", path.display()),
            ));
        }
        Ok(Self::new(PubmedCassette::load(path)?))
    }
}

impl Transport for FixtureTransport {
    fn execute(&self, request: &EutilsRequest) -> Result<String, TransportError> {
        match request {
            EutilsRequest::Search(s) => self.cassette.answer(request).ok_or_else(|| {
                TransportError::Fatal(format!("fixture has no search for {:?}", s.query))
            }),
            EutilsRequest::Fetch { pmids } => {
                let found: Vec<Article> = pmids
                    .iter()
                    .filter_map(|p| {
                        self.cassette.articles.get(p).map(|a| Article {
                            pmid: p.clone(),
                            title: a.title.clone(),
                            abstract_text: a.abstract_text.clone(),
                        })
                    })
                    .collect();
                Ok(render_efetch(&found))
            }
        }
    }
}

/// Replays what the cassette knows and records everything else from the
/// inner transport.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    path: PathBuf,
    cassette: Mutex<PubmedCassette>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>, path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let cassette = PubmedCassette::load(&path)?;
        Ok(RecordingTransport {
            inner,
            path,
            cassette: Mutex::new(cassette),
        })
    }
}

impl Transport for RecordingTransport {
    fn execute(&self, request: &EutilsRequest) -> Result<String, TransportError> {
        if let Some(hit) = self.cassette.lock().expect("cassette").answer(request) {
            return Ok(hit);
        }
        let body = self.inner.execute(request)?;
        let mut cassette = self.cassette.lock().expect("cassette");
        match request {
            EutilsRequest::Search(s) => match parse_esearch(&body) {
                Ok(ids) => {
                    cassette.searches.insert(s.query.clone(), ids);
                }
                Err(super::parse::PayloadError::Rejected(msg)) => {
                    cassette.search_errors.insert(s.query.clone(), msg);
                }
                Err(_) => return Ok(body),
            },
            EutilsRequest::Fetch { pmids } => {
                let Ok(found) = parse_efetch(&body) else {
                    return Ok(body);
                };
                for a in &found {
                    cassette.articles.insert(
                        a.pmid.clone(),
                        FixtureArticle {
                            title: a.title.clone(),
                            abstract_text: a.abstract_text.clone(),
                        },
                    );
                }
                for p in pmids {
                    if !cassette.articles.contains_key(p) {
                        cassette.missing.insert(p.clone());
                    }
                }
            }
        }
        cassette
            .save(&self.path)
            .map_err(|e| TransportError::Fatal(format!("cannot write cassette: {e}")))?;
        Ok(body)
    }
}
