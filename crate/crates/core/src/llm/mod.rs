//! Provider-neutral chat completion access.
//!
//! A [`Gateway`] wraps any [`ChatBackend`] with bounded retries, an optional
//! write-once response cache keyed by request fingerprint, and a transcript of
//! every exchange it handled. Backends: OpenAI-style HTTP, a scripted mock and
//! a record/replay cassette wrapper.

mod backend;
mod cache;
mod retry;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::types::GenerationProfile;

pub use backend::{
    BackendError, Cassette, CassetteEntry, ChatBackend, FailKind, HttpBackend, RecorderBackend,
    ScriptRule, ScriptedBackend, ScriptFile,
};
pub use cache::{CacheEntry, ResponseCache};
pub use retry::{Backoff, RecordingSleeper, Sleeper, ThreadSleeper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// Pipeline step a request belongs to; selects its sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Expansion,
    Reformulation,
    Reranking,
    Answering,
}

/// Temperature is always zero; only the retrieval-side steps set penalties.
pub fn profile_for(step: Step) -> GenerationProfile {
    match step {
        Step::Expansion => GenerationProfile::new(0.0, 0.5, 0.1),
        Step::Reformulation => GenerationProfile::new(0.0, 0.6, 0.2),
        Step::Reranking => GenerationProfile::new(0.0, 0.3, 0.1),
        Step::Answering => GenerationProfile::new(0.0, 0.0, 0.0),
    }
}

/// A chat request and, once completed, its response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub profile: GenerationProfile,
    pub response: Option<String>,
    pub attempt_count: u32,
}

#[derive(Serialize)]
struct FingerprintView<'a> {
    model_id: &'a str,
    messages: &'a [ChatMessage],
    profile: &'a GenerationProfile,
}

impl ChatExchange {
    pub fn new(
        model_id: impl Into<String>,
        messages: Vec<ChatMessage>,
        profile: GenerationProfile,
    ) -> Self {
        ChatExchange {
            model_id: model_id.into(),
            messages,
            profile,
            response: None,
            attempt_count: 0,
        }
    }

    /// SHA-256 over the canonical JSON of model, messages and profile.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.model_id, &self.messages, &self.profile)
    }

    fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidExchange(m.to_string()));
        match self.messages.first() {
            Some(m) if m.role == Role::System => {}
            _ => return bad("first message must be the system message"),
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return bad("message content must not be empty");
        }
        if self.profile.temperature != 0.0 {
            return bad("temperature must be 0");
        }
        if !self.profile.penalties_in_range() {
            return bad("penalties must lie in [-2, 2]");
        }
        Ok(())
    }

    /// Text of the final message, which carries the task prompt.
    pub fn last_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

pub fn fingerprint(model_id: &str, messages: &[ChatMessage], profile: &GenerationProfile) -> String {
    let view = FingerprintView {
        model_id,
        messages,
        profile,
    };
    let bytes = serde_json::to_vec(&view).expect("fingerprint view serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GatewayError {
    #[error("all {attempts} attempts failed; last error: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("no scripted response for fingerprint {0}")]
    ScriptMiss(String),
    #[error("invalid exchange: {0}")]
    InvalidExchange(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Retry parameters: `max_retries` extra attempts after the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Backoff,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            backoff: Backoff::new(std::time::Duration::from_secs(1)),
        }
    }
}

/// What the gateway observed for one `complete` call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub messages: Vec<ChatMessage>,
    pub profile: GenerationProfile,
    pub response: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
    pub cached: bool,
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    cache: Option<ResponseCache>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    transcript: Mutex<Vec<TranscriptEntry>>,
    network_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Gateway {
            backend,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            cache: None,
            key_locks: Mutex::new(HashMap::new()),
            transcript: Mutex::new(Vec::new()),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    /// Number of times the backend was actually invoked (retries included).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().expect("transcript lock").clone()
    }

    pub fn clear_transcript(&self) {
        self.transcript.lock().expect("transcript lock").clear();
    }

    /// Sends `exchange`, filling in `response` and `attempt_count`.
    ///
    /// Transient failures are retried with backoff up to the policy's
    /// `max_retries`; authentication failures and rejections are not.
    pub fn complete(&self, exchange: &mut ChatExchange) -> Result<String, GatewayError> {
        exchange.validate()?;
        let fp = exchange.fingerprint();

        // Serialize identical requests so a cache never sees two misses.
        let key_lock = {
            let mut locks = self.key_locks.lock().expect("key lock map");
            locks.entry(fp.clone()).or_default().clone()
        };
        let _guard = key_lock.lock().expect("key lock");

        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&fp).map_err(|e| GatewayError::Cache(e.to_string()))? {
                exchange.response = Some(hit.clone());
                exchange.attempt_count = 0;
                self.record(exchange, &fp, None, true);
                return Ok(hit);
            }
        }

        let result = self.send_with_retry(exchange);
        match &result {
            Ok(text) => {
                exchange.response = Some(text.clone());
                if let Some(cache) = &self.cache {
                    cache
                        .put(&CacheEntry {
                            fingerprint: fp.clone(),
                            model_id: exchange.model_id.clone(),
                            response: text.clone(),
                        })
                        .map_err(|e| GatewayError::Cache(e.to_string()))?;
                }
                self.record(exchange, &fp, None, false);
            }
            Err(e) => self.record(exchange, &fp, Some(e.to_string()), false),
        }
        result
    }

    fn send_with_retry(&self, exchange: &mut ChatExchange) -> Result<String, GatewayError> {
        let max_attempts = self.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            exchange.attempt_count = attempt;
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.send(exchange) {
                Ok(text) => return Ok(text),
                Err(BackendError::Transient(msg)) => {
                    log::warn!("attempt {attempt}/{max_attempts} failed: {msg}");
                    last = msg;
                    if attempt < max_attempts {
                        let delay = self.retry.backoff.delay(attempt, rand::random::<f64>());
                        self.sleeper.sleep(delay);
                    }
                }
                Err(BackendError::Auth(msg)) => return Err(GatewayError::Auth(msg)),
                Err(BackendError::Rejected(msg)) => return Err(GatewayError::Rejected(msg)),
                Err(BackendError::ScriptMiss(fp)) => return Err(GatewayError::ScriptMiss(fp)),
            }
        }
        Err(GatewayError::TransportExhausted {
            attempts: max_attempts,
            last,
        })
    }

    fn record(&self, exchange: &ChatExchange, fp: &str, error: Option<String>, cached: bool) {
        self.transcript
            .lock()
            .expect("transcript lock")
            .push(TranscriptEntry {
                fingerprint: fp.to_string(),
                messages: exchange.messages.clone(),
                profile: exchange.profile,
                response: exchange.response.clone(),
                error,
                attempts: exchange.attempt_count,
                cached,
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{system_prompt, Task};
    use std::sync::atomic::AtomicU32;
    use std::time::Duration;

    struct Flaky {
        script: Mutex<Vec<Result<String, BackendError>>>,
        calls: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn send(&self, _: &ChatExchange) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.script.lock().unwrap().remove(0)
        }
    }

    fn flaky(script: Vec<Result<String, BackendError>>) -> Arc<Flaky> {
        Arc::new(Flaky {
            script: Mutex::new(script),
            calls: AtomicU32::new(0),
        })
    }

    fn exchange(prompt: &str) -> ChatExchange {
        ChatExchange::new(
            "m",
            vec![system_prompt(Task::Bioasq), ChatMessage::user(prompt)],
            profile_for(Step::Answering),
        )
    }

    fn gateway(backend: Arc<dyn ChatBackend>, retries: u32) -> (Gateway, Arc<RecordingSleeper>) {
        let sleeper = Arc::new(RecordingSleeper::default());
        let gw = Gateway::new(backend)
            .with_retry(RetryPolicy {
                max_retries: retries,
                backoff: Backoff::new(Duration::from_millis(10)),
            })
            .with_sleeper(sleeper.clone());
        (gw, sleeper)
    }

    #[test]
    fn profiles() {
        let e = profile_for(Step::Expansion);
        assert_eq!((e.temperature, e.frequency_penalty, e.presence_penalty), (0.0, 0.5, 0.1));
        let r = profile_for(Step::Reformulation);
        assert_eq!((r.frequency_penalty, r.presence_penalty), (0.6, 0.2));
        let k = profile_for(Step::Reranking);
        assert_eq!((k.frequency_penalty, k.presence_penalty), (0.3, 0.1));
        let a = profile_for(Step::Answering);
        assert_eq!((a.frequency_penalty, a.presence_penalty), (0.0, 0.0));
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let b = flaky(vec![
            Err(BackendError::Transient("500".into())),
            Err(BackendError::Transient("500".into())),
            Ok("ok".into()),
        ]);
        let (gw, sleeper) = gateway(b.clone(), 3);
        let mut ex = exchange("hi");
        assert_eq!(gw.complete(&mut ex).unwrap(), "ok");
        assert_eq!(ex.attempt_count, 3);
        assert_eq!(ex.response.as_deref(), Some("ok"));
        let delays = sleeper.delays();
        assert_eq!(delays.len(), 2);
        assert!(delays[1] >= delays[0]);
    }

    #[test]
    fn auth_is_not_retried() {
        let b = flaky(vec![Err(BackendError::Auth("401".into())), Ok("never".into())]);
        let (gw, sleeper) = gateway(b.clone(), 3);
        let mut ex = exchange("hi");
        assert!(matches!(gw.complete(&mut ex), Err(GatewayError::Auth(_))));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
        assert!(sleeper.delays().is_empty());
    }

    #[test]
    fn exhaustion_bounds_attempts() {
        let b = flaky((0..10).map(|_| Err(BackendError::Transient("503".into()))).collect());
        let (gw, _) = gateway(b.clone(), 2);
        let mut ex = exchange("hi");
        let err = gw.complete(&mut ex).unwrap_err();
        assert!(matches!(err, GatewayError::TransportExhausted { attempts: 3, .. }));
        assert_eq!(ex.attempt_count, 3);
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn rejects_nonzero_temperature_and_missing_system() {
        let (gw, _) = gateway(flaky(vec![]), 0);
        let mut ex = exchange("hi");
        ex.profile.temperature = 0.7;
        assert!(matches!(gw.complete(&mut ex), Err(GatewayError::InvalidExchange(_))));
        let mut ex = ChatExchange::new("m", vec![ChatMessage::user("x")], profile_for(Step::Answering));
        assert!(matches!(gw.complete(&mut ex), Err(GatewayError::InvalidExchange(_))));
        assert_eq!(gw.network_calls(), 0);
    }

    #[test]
    fn cache_makes_one_network_call_per_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let b = flaky(vec![Ok("first".into()), Ok("second".into())]);
        let (gw, _) = gateway(b.clone(), 0);
        let gw = gw.with_cache(ResponseCache::new(dir.path()).unwrap());
        let mut a = exchange("same");
        let mut c = exchange("same");
        assert_eq!(gw.complete(&mut a).unwrap(), "first");
        assert_eq!(gw.complete(&mut c).unwrap(), "first");
        assert_eq!(c.attempt_count, 0);
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);

        // A fresh gateway over the same directory still hits.
        let (gw2, _) = gateway(flaky(vec![]), 0);
        let gw2 = gw2.with_cache(ResponseCache::new(dir.path()).unwrap());
        assert_eq!(gw2.complete(&mut exchange("same")).unwrap(), "first");
        assert_eq!(gw2.network_calls(), 0);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = exchange("x");
        assert_eq!(a.fingerprint(), exchange("x").fingerprint());
        assert_ne!(a.fingerprint(), exchange("y").fingerprint());
        let mut b = exchange("x");
        b.profile = profile_for(Step::Reranking);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
