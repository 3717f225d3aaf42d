//! Backends and clients built from a run configuration.

use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use medqa::config::{LlmBackendKind, PubmedBackendKind, RunConfig};
use medqa::llm::{
    Backoff, Cassette, ChatBackend, Gateway, HttpBackend, RecorderBackend, ResponseCache,
    RetryPolicy, ScriptedBackend,
};
use medqa::pubmed::{
    FixtureTransport, HttpTransport, PubmedClient, RateLimiter, RecordingTransport, SystemClock,
    Transport,
};

/// Shared, thread-safe services for one batch. Each work item gets its own
/// [`Gateway`] so its transcript holds only its own exchanges.
pub struct Services {
    pub config: RunConfig,
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    pubmed: Option<PubmedClient>,
}

impl Services {
    /// `use_cache = false` ignores `cache_dir`.
    pub fn new(config: RunConfig, needs_pubmed: bool, use_cache: bool) -> Result<Self> {
        let backend = chat_backend(&config)?;
        let cache = match (&config.cache_dir, use_cache) {
            (Some(dir), true) => Some(
                ResponseCache::new(dir)
                    .with_context(|| format!("cannot create cache dir {}", dir.display()))?,
            ),
            _ => None,
        };
        let pubmed = if needs_pubmed {
            Some(pubmed_client(&config)?)
        } else {
            None
        };
        Ok(Services {
            config,
            backend,
            cache,
            pubmed,
        })
    }

    pub fn gateway(&self) -> Gateway {
        let retry = RetryPolicy {
            max_retries: self.config.retry_max,
            backoff: Backoff::new(self.config.retry_base_delay()),
        };
        let gateway = Gateway::new(self.backend.clone()).with_retry(retry);
        match &self.cache {
            Some(cache) => gateway.with_cache(cache.clone()),
            None => gateway,
        }
    }

    pub fn pubmed(&self) -> &PubmedClient {
        self.pubmed.as_ref().expect("services built with PubMed access")
    }
}

fn chat_backend(config: &RunConfig) -> Result<Arc<dyn ChatBackend>> {
    let llm = &config.llm;
    let timeout = Duration::from_secs(llm.timeout_secs);
    let backend: Arc<dyn ChatBackend> = match llm.backend {
        LlmBackendKind::Http => Arc::new(HttpBackend::new(
            &config.api_base_url,
            config.api_key()?,
            timeout,
        )),
        LlmBackendKind::Scripted => match (&llm.script, &llm.cassette) {
            (Some(script), _) => Arc::new(
                ScriptedBackend::load(script)
                    .with_context(|| format!("cannot load script {}", script.display()))?,
            ),
            (None, Some(cassette)) => Arc::new(ScriptedBackend::from_cassette(
                &Cassette::load(cassette)
                    .with_context(|| format!("cannot load cassette {}", cassette.display()))?,
            )),
            (None, None) => bail!("llm.backend = \"scripted\" needs llm.script or llm.cassette"),
        },
        LlmBackendKind::Record => {
            let Some(cassette) = &llm.cassette else {
                bail!("llm.backend = \"record\" needs llm.cassette");
            };
            let live = Arc::new(HttpBackend::new(&config.api_base_url, config.api_key()?, timeout));
            Arc::new(
                RecorderBackend::new(live, cassette)
                    .with_context(|| format!("cannot open cassette {}", cassette.display()))?,
            )
        }
    };
    Ok(backend)
}

fn pubmed_client(config: &RunConfig) -> Result<PubmedClient> {
    let p = &config.pubmed;
    let live = || {
        HttpTransport::new(
            &p.base_url,
            config.ncbi_api_key(),
            &p.date_type,
            Duration::from_secs(p.timeout_secs),
        )
    };
    let (transport, rate): (Arc<dyn Transport>, f64) = match p.backend {
        PubmedBackendKind::Http => (Arc::new(live()), p.requests_per_second),
        PubmedBackendKind::Fixture => {
            let Some(path) = &p.fixture else {
                bail!("pubmed.backend = \"fixture\" needs pubmed.fixture");
            };
            let fixture = FixtureTransport::load(path)
                .with_context(|| format!("cannot load fixture {}", path.display()))?;
            // Replayed payloads never reach NCBI, so they are not throttled.
            (Arc::new(fixture), f64::INFINITY)
        }
        PubmedBackendKind::Record => {
            let Some(path) = &p.fixture else {
                bail!("pubmed.backend = \"record\" needs pubmed.fixture");
            };
            let recorder = RecordingTransport::new(Arc::new(live()), path)
                .with_context(|| format!("cannot open fixture {}", path.display()))?;
            (Arc::new(recorder), p.requests_per_second)
        }
    };
    let limiter = Arc::new(RateLimiter::new(rate, Arc::new(SystemClock::default())));
    Ok(PubmedClient::new(transport, limiter)
        .with_retry(config.retry_max, Backoff::new(config.retry_base_delay())))
}
