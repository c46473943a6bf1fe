//! Configuration file. Every field has a default, so an empty file (or no
//! file) is valid; callers layer flags and environment on top.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{EngineConfig, DEFAULT_THETA};
use crate::provider::{LiveConfig, RetryPolicy};
use crate::traces::{DEFAULT_K, DEFAULT_TAU_SIM};

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("cannot read config {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("live providers need {0}")]
    MissingLive(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    pub k: usize,
    pub tau_sim: f64,
    pub theta: f64,
    pub workers: usize,
    pub ordered_batches: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            tau_sim: DEFAULT_TAU_SIM,
            theta: DEFAULT_THETA,
            workers: 4,
            ordered_batches: true,
        }
    }
}

/// Live endpoints and models. Model names are data: nothing in the engine
/// depends on which model answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub chat_url: String,
    pub chat_model: String,
    pub embedding_url: String,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub search_url: String,
    pub timeout_secs: u64,
    pub retries: u32,
    /// Environment variables holding credentials; keys never live in the file.
    pub api_key_env: String,
    pub search_api_key_env: String,
    pub stub_dim: usize,
    pub stub_seed: u64,
    /// Delay added to every stub completion, for exercising slow batches.
    pub stub_latency_ms: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            chat_url: String::new(),
            chat_model: String::new(),
            embedding_url: String::new(),
            embedding_model: String::new(),
            embedding_dim: 1536,
            search_url: String::new(),
            timeout_secs: 60,
            retries: 3,
            api_key_env: "SKUMAP_API_KEY".into(),
            search_api_key_env: "SKUMAP_SEARCH_API_KEY".into(),
            stub_dim: crate::scenario::STUB_DIM,
            stub_seed: crate::scenario::STUB_SEED,
            stub_latency_ms: 0,
        }
    }
}

impl ProviderSettings {
    /// Resolve the live configuration, reading credentials through `env`.
    pub fn live_config(&self, env: impl Fn(&str) -> Option<String>) -> Result<LiveConfig, SettingsError> {
        for (name, value) in [
            ("provider.chat_url", &self.chat_url),
            ("provider.chat_model", &self.chat_model),
            ("provider.embedding_url", &self.embedding_url),
            ("provider.embedding_model", &self.embedding_model),
            ("provider.search_url", &self.search_url),
        ] {
            if value.trim().is_empty() {
                return Err(SettingsError::MissingLive(name.into()));
            }
        }
        let api_key = env(&self.api_key_env).filter(|k| !k.is_empty());
        if api_key.is_none() {
            return Err(SettingsError::MissingLive(format!("${}", self.api_key_env)));
        }
        Ok(LiveConfig {
            chat_url: self.chat_url.clone(),
            chat_model: self.chat_model.clone(),
            embedding_url: self.embedding_url.clone(),
            embedding_model: self.embedding_model.clone(),
            embedding_dim: self.embedding_dim,
            search_url: self.search_url.clone(),
            api_key,
            search_api_key: env(&self.search_api_key_env).filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(self.timeout_secs),
            retry: RetryPolicy {
                retries: self.retries,
                ..RetryPolicy::default()
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub traces: PathBuf,
    pub review: PathBuf,
    /// Few-shot exemplars (dataset format); the shipped set when absent.
    pub exemplars: Option<PathBuf>,
    /// Stub script used when live providers are off.
    pub fixtures: Option<PathBuf>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
    /// Directory holding stopwords.txt, units.tsv and brands.txt overrides.
    pub rules: Option<PathBuf>,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            traces: PathBuf::from("skumap-data/traces.jsonl"),
            review: PathBuf::from("skumap-data/review.jsonl"),
            exemplars: None,
            fixtures: None,
            templates: None,
            rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u16,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub engine: EngineSettings,
    pub provider: ProviderSettings,
    pub paths: PathSettings,
    pub service: ServiceSettings,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, SettingsError> {
        let s: Self = toml::from_str(text).map_err(|e| SettingsError::Invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let text = fs::read_to_string(path).map_err(|e| SettingsError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Load `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, SettingsError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        let e = &self.engine;
        if e.k == 0 {
            return Err(SettingsError::Invalid("engine.k must be at least 1".into()));
        }
        for (name, v) in [("engine.tau_sim", e.tau_sim), ("engine.theta", e.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SettingsError::Invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if e.workers == 0 {
            return Err(SettingsError::Invalid("engine.workers must be at least 1".into()));
        }
        if self.provider.stub_dim == 0 || self.provider.embedding_dim == 0 {
            return Err(SettingsError::Invalid("embedding dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            k: self.engine.k,
            tau_sim: self.engine.tau_sim,
            theta: self.engine.theta,
            ordered_batches: self.engine.ordered_batches,
            record_wall_time: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let s = Settings::parse("").unwrap();
        assert_eq!(s, Settings::default());
        assert_eq!(s.engine.k, 5);
        assert_eq!(s.engine.tau_sim, 0.85);
        assert_eq!(s.engine.theta, 0.7);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let s = Settings::parse("[engine]\ntheta = 0.5\n[service]\nport = 9000\n").unwrap();
        assert_eq!(s.engine.theta, 0.5);
        assert_eq!(s.engine.k, 5);
        assert_eq!(s.service.port, 9000);
        assert_eq!(s.service.bind, "127.0.0.1");
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(Settings::parse("[engine]\nk = 0\n").is_err());
        assert!(Settings::parse("[engine]\ntau_sim = 1.5\n").is_err());
        assert!(Settings::parse("[engine]\nkk = 3\n").is_err());
    }

    #[test]
    fn live_needs_endpoints_and_key() {
        let mut p = ProviderSettings::default();
        assert!(matches!(p.live_config(|_| None), Err(SettingsError::MissingLive(_))));
        p.chat_url = "http://chat".into();
        p.chat_model = "m".into();
        p.embedding_url = "http://emb".into();
        p.embedding_model = "e".into();
        p.search_url = "http://search".into();
        assert!(matches!(p.live_config(|_| None), Err(SettingsError::MissingLive(k)) if k.contains("SKUMAP_API_KEY")));
        let cfg = p.live_config(|k| (k == "SKUMAP_API_KEY").then(|| "secret".into())).unwrap();
        assert_eq!(cfg.api_key.as_deref(), Some("secret"));
        assert_eq!(cfg.search_api_key, None);
    }
}
