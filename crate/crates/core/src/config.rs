//! Run configuration: a TOML file plus `key=value` overrides.
//!
//! Relative paths inside the file are resolved against the file's directory.
//! Secrets are never read from the file; only the *name* of the environment
//! variable that holds them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    #[default]
    Http,
    /// Canned responses from a script file; never touches the network.
    Scripted,
    /// Replays from a cassette, falling through to HTTP and recording misses.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub backend: LlmBackendKind,
    pub script: Option<PathBuf>,
    pub cassette: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            backend: LlmBackendKind::Http,
            script: None,
            cassette: None,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PubmedBackendKind {
    #[default]
    Http,
    Fixture,
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PubmedSettings {
    pub backend: PubmedBackendKind,
    pub fixture: Option<PathBuf>,
    pub base_url: String,
    pub requests_per_second: f64,
    /// Name of the environment variable holding an NCBI API key, if any.
    pub api_key_env_var: Option<String>,
    pub date_type: String,
    pub timeout_secs: u64,
}

impl Default for PubmedSettings {
    fn default() -> Self {
        PubmedSettings {
            backend: PubmedBackendKind::Http,
            fixture: None,
            base_url: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils".to_string(),
            requests_per_second: 3.0,
            api_key_env_var: None,
            date_type: "pdat".to_string(),
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazetteerColumns {
    pub code: String,
    pub term: String,
    pub semantic_tag: String,
}

impl Default for GazetteerColumns {
    fn default() -> Self {
        GazetteerColumns {
            code: "code".to_string(),
            term: "term".to_string(),
            semantic_tag: "semantic_tag".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MedprocSettings {
    pub gazetteer: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub example_count: usize,
    pub link_threshold: f64,
    pub columns: GazetteerColumns,
    /// Semantic tags (case-insensitive) that mark a procedure row.
    pub procedure_tags: Vec<String>,
}

impl Default for MedprocSettings {
    fn default() -> Self {
        MedprocSettings {
            gazetteer: None,
            examples: None,
            example_count: 3,
            link_threshold: 0.25,
            columns: GazetteerColumns::default(),
            procedure_tags: vec!["procedure".to_string(), "procedimiento".to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model_id: String,
    pub api_base_url: String,
    pub api_key_env_var: String,
    pub max_date: NaiveDate,
    pub search_limit: usize,
    pub output_limit: usize,
    pub expansion_enabled: bool,
    pub grounded: bool,
    pub cache_dir: Option<PathBuf>,
    pub retry_max: u32,
    pub retry_base_delay_ms: u64,
    /// Questions processed in parallel.
    pub workers: usize,
    pub gmap_epsilon: f64,
    pub llm: LlmSettings,
    pub pubmed: PubmedSettings,
    pub medproc: MedprocSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model_id: "gpt-4".to_string(),
            api_base_url: "https://api.openai.com/v1".to_string(),
            api_key_env_var: "OPENAI_API_KEY".to_string(),
            max_date: NaiveDate::from_ymd_opt(2022, 12, 31).expect("valid date"),
            search_limit: 50,
            output_limit: 10,
            expansion_enabled: true,
            grounded: true,
            cache_dir: None,
            retry_max: 5,
            retry_base_delay_ms: 1000,
            workers: 4,
            gmap_epsilon: 0.01,
            llm: LlmSettings::default(),
            pubmed: PubmedSettings::default(),
            medproc: MedprocSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn retry_base_delay(&self) -> Duration {
        Duration::from_millis(self.retry_base_delay_ms)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.search_limit < 1 {
            return fail("search_limit must be at least 1");
        }
        if self.output_limit > self.search_limit {
            return fail("output_limit must not exceed search_limit");
        }
        if self.model_id.trim().is_empty() {
            return fail("model_id must not be empty");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        if !(self.gmap_epsilon > 0.0) {
            return fail("gmap_epsilon must be positive");
        }
        if !(self.pubmed.requests_per_second > 0.0) {
            return fail("pubmed.requests_per_second must be positive");
        }
        if !(0.0..=1.0).contains(&self.medproc.link_threshold) {
            return fail("medproc.link_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    /// Reads the TOML file, applies `key=value` overrides, resolves relative
    /// paths and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, overrides, base)
    }

    pub fn from_toml_str(
        text: &str,
        overrides: &[String],
        base_dir: &Path,
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for raw in overrides {
            apply_override(&mut table, raw)?;
        }
        dates_to_strings(&mut table);
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.cache_dir);
        fix(&mut self.llm.script);
        fix(&mut self.llm.cassette);
        fix(&mut self.pubmed.fixture);
        fix(&mut self.medproc.gazetteer);
        fix(&mut self.medproc.examples);
    }

    pub fn api_key(&self) -> Result<String, ConfigError> {
        std::env::var(&self.api_key_env_var)
            .map_err(|_| ConfigError::MissingEnv(self.api_key_env_var.clone()))
    }

    pub fn ncbi_api_key(&self) -> Option<String> {
        self.pubmed
            .api_key_env_var
            .as_ref()
            .and_then(|name| std::env::var(name).ok())
    }

    /// Flat view used in reports and logs. Never contains secret values.
    pub fn summary(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("model_id", self.model_id.clone());
        m.insert("max_date", self.max_date.to_string());
        m.insert("search_limit", self.search_limit.to_string());
        m.insert("output_limit", self.output_limit.to_string());
        m.insert("expansion_enabled", self.expansion_enabled.to_string());
        m.insert("grounded", self.grounded.to_string());
        m
    }
}

fn apply_override(table: &mut toml::Table, raw: &str) -> Result<(), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(raw.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(raw.to_string()));
    }
    let value = parse_override_value(value.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut current = table;
    for part in parts {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Override(raw.to_string())),
        };
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// TOML date literals (`max_date = 2022-12-31`) become strings so they
/// deserialize like the quoted form.
fn dates_to_strings(table: &mut toml::Table) {
    for (_, value) in table.iter_mut() {
        match value {
            toml::Value::Datetime(dt) => *value = toml::Value::String(dt.to_string()),
            toml::Value::Table(t) => dates_to_strings(t),
            _ => {}
        }
    }
}

/// Interprets the right-hand side as a TOML literal when it parses as one,
/// otherwise as a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
