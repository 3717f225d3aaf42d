use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::tempfile_in;
use super::{ChatExchange, ChatMessage};
use crate::types::GenerationProfile;

/// Failure classes a backend reports; the gateway decides what to retry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// 5xx, 429, timeouts, dropped connections.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    /// Other 4xx; retrying the same request will not help.
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("no scripted response for {0}")]
    ScriptMiss(String),
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, exchange: &ChatExchange) -> Result<String, BackendError>;
}

/// OpenAI-style `POST {base}/chat/completions`.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpBackend {
    pub fn new(api_base_url: &str, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        HttpBackend {
            agent,
            endpoint: format!("{}/chat/completions", api_base_url.trim_end_matches('/')),
            api_key: api_key.into(),
        }
    }

    pub fn request_body(exchange: &ChatExchange) -> Value {
        json!({
            "model": exchange.model_id,
            "messages": exchange.messages,
            "temperature": exchange.profile.temperature,
            "frequency_penalty": exchange.profile.frequency_penalty,
            "presence_penalty": exchange.profile.presence_penalty,
        })
    }
}

fn classify_status(code: u16, body: String) -> BackendError {
    let msg = format!("HTTP {code}: {}", body.chars().take(300).collect::<String>());
    match code {
        401 | 403 => BackendError::Auth(msg),
        408 | 409 | 429 => BackendError::Transient(msg),
        500..=599 => BackendError::Transient(msg),
        _ => BackendError::Rejected(msg),
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, exchange: &ChatExchange) -> Result<String, BackendError> {
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(Self::request_body(exchange));
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                return Err(classify_status(code, r.into_string().unwrap_or_default()))
            }
            Err(ureq::Error::Transport(t)) => return Err(BackendError::Transient(t.to_string())),
        };
        let body: Value = response
            .into_json()
            .map_err(|e| BackendError::Transient(format!("unreadable response body: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transient(format!("response without content: {body}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailKind {
    Transient,
    Auth,
}

/// Matches when every `contains` needle occurs in the final message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub fail: Option<FailKind>,
    /// With `fail`, fail only this many times per fingerprint, then respond.
    #[serde(default)]
    pub fail_times: Option<u32>,
}

impl ScriptRule {
    pub fn respond(contains: &[&str], response: impl Into<String>) -> Self {
        ScriptRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            response: Some(response.into()),
            ..Default::default()
        }
    }

    fn matches(&self, last: &str) -> bool {
        self.contains.iter().all(|needle| last.contains(needle.as_str()))
    }
}

/// On-disk script: exact fingerprint entries take precedence over rules;
/// rules are tried in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    #[serde(default)]
    pub entries: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

/// Deterministic mock: same request, same answer, no network.
#[derive(Default)]
pub struct ScriptedBackend {
    script: ScriptFile,
    failures: Mutex<HashMap<(usize, String), u32>>,
}

impl ScriptedBackend {
    pub fn new(script: ScriptFile) -> Self {
        ScriptedBackend {
            script,
            failures: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self::new(ScriptFile {
            entries: entries.into_iter().collect(),
            rules: Vec::new(),
        })
    }

    pub fn from_rules(rules: Vec<ScriptRule>) -> Self {
        Self::new(ScriptFile {
            entries: BTreeMap::new(),
            rules,
        })
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(script))
    }

    /// Replays a recorded cassette without any live fallback.
    pub fn from_cassette(cassette: &Cassette) -> Self {
        Self::from_entries(
            cassette
                .interactions
                .iter()
                .map(|(fp, e)| (fp.clone(), e.response.clone())),
        )
    }
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, exchange: &ChatExchange) -> Result<String, BackendError> {
        let fp = exchange.fingerprint();
        if let Some(text) = self.script.entries.get(&fp) {
            return Ok(text.clone());
        }
        let last = exchange.last_content();
        for (idx, rule) in self.script.rules.iter().enumerate() {
            if !rule.matches(last) {
                continue;
            }
            if let Some(kind) = rule.fail {
                let mut failures = self.failures.lock().expect("script failure counts");
                let seen = failures.entry((idx, fp.clone())).or_insert(0);
                let still_failing = rule.fail_times.map_or(true, |n| *seen < n);
                if still_failing {
                    *seen += 1;
                    return Err(match kind {
                        FailKind::Transient => BackendError::Transient("scripted failure".into()),
                        FailKind::Auth => BackendError::Auth("scripted failure".into()),
                    });
                }
            }
            if let Some(resp) = &rule.response {
                return Ok(resp.clone());
            }
        }
        Err(BackendError::ScriptMiss(fp))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub profile: GenerationProfile,
    pub response: String,
}

/// Recorded interactions keyed by fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Cassette {
    pub interactions: BTreeMap<String, CassetteEntry>,
}

impl Cassette {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Cassette::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let (tmp, mut file) = tempfile_in(dir, "cassette")?;
        file.write_all(&serde_json::to_vec_pretty(self)?)?;
        file.sync_all()?;
        drop(file);
        std::fs::rename(tmp, path)
    }
}

/// Replays recorded responses; misses go to the inner backend and are
/// appended to the cassette file.
pub struct RecorderBackend {
    inner: Arc<dyn ChatBackend>,
    path: PathBuf,
    cassette: Mutex<Cassette>,
}

impl RecorderBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let cassette = Cassette::load(&path)?;
        Ok(RecorderBackend {
            inner,
            path,
            cassette: Mutex::new(cassette),
        })
    }
}

impl ChatBackend for RecorderBackend {
    fn send(&self, exchange: &ChatExchange) -> Result<String, BackendError> {
        let fp = exchange.fingerprint();
        if let Some(hit) = self
            .cassette
            .lock()
            .expect("cassette lock")
            .interactions
            .get(&fp)
        {
            return Ok(hit.response.clone());
        }
        let response = self.inner.send(exchange)?;
        let mut cassette = self.cassette.lock().expect("cassette lock");
        cassette.interactions.insert(
            fp,
            CassetteEntry {
                model_id: exchange.model_id.clone(),
                messages: exchange.messages.clone(),
                profile: exchange.profile,
                response: response.clone(),
            },
        );
        cassette
            .save(&self.path)
            .map_err(|e| BackendError::Rejected(format!("cannot write cassette: {e}")))?;
        Ok(response)
    }
}
