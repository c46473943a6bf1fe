//! Deterministic scripted providers for offline runs and tests.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatModel, CompletionRequest, Embedder, ProviderError, SearchEngine, SearchResult};
use crate::vector::EmbeddingVector;
use crate::Embedding;

/// Hex SHA-256 over the system and user prompts; the key for exact fixtures.
pub fn request_digest(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update([0x1f]);
    h.update(user.as_bytes());
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Substring rule: matches when every needle occurs in the prompt text (system
/// prompt, newline, user prompt) and the tag, if set, equals the request's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    #[serde(default)]
    pub tag: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub response: String,
}

impl StubRule {
    pub fn tagged(tag: &str) -> Self {
        Self {
            tag: Some(tag.to_string()),
            contains: Vec::new(),
            response: String::new(),
        }
    }

    pub fn any() -> Self {
        Self {
            tag: None,
            contains: Vec::new(),
            response: String::new(),
        }
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn respond(mut self, response: impl Into<String>) -> Self {
        self.response = response.into();
        self
    }

    fn matches(&self, req: &CompletionRequest, text: &str) -> bool {
        self.tag
            .as_ref()
            .is_none_or(|t| *t == req.response_schema_tag)
            && self.contains.iter().all(|n| text.contains(n.as_str()))
    }
}

/// Scripted chat model. Exact digest fixtures win over rules; rules are tried
/// in insertion order. An unscripted prompt is a [`ProviderError::StubMiss`].
#[derive(Debug, Default)]
pub struct StubChat {
    exact: HashMap<String, String>,
    rules: Vec<StubRule>,
    latency: Option<Duration>,
    captured: Mutex<Vec<CompletionRequest>>,
}

impl StubChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_exact(mut self, system: &str, user: &str, response: impl Into<String>) -> Self {
        self.exact.insert(request_digest(system, user), response.into());
        self
    }

    pub fn with_digest(mut self, digest: impl Into<String>, response: impl Into<String>) -> Self {
        self.exact.insert(digest.into(), response.into());
        self
    }

    pub fn with_rule(mut self, rule: StubRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Every request seen so far, in call order.
    pub fn captured(&self) -> Vec<CompletionRequest> {
        self.captured.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatModel for StubChat {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        self.captured
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(req.clone());
        let digest = request_digest(&req.system_prompt, &req.user_prompt);
        if let Some(r) = self.exact.get(&digest) {
            return Ok(r.clone());
        }
        let text = format!("{}\n{}", req.system_prompt, req.user_prompt);
        self.rules
            .iter()
            .find(|r| r.matches(req, &text))
            .map(|r| r.response.clone())
            .ok_or_else(|| {
                ProviderError::StubMiss(format!(
                    "tag {} digest {}",
                    req.response_schema_tag,
                    &digest[..12]
                ))
            })
    }
}

/// Chat model backed by a closure; handy for scripted scenarios in tests.
pub struct FnChat<F>(pub F);

impl<F> ChatModel for FnChat<F>
where
    F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (self.0)(req)
    }
}

/// Seeded hash-to-vector embedder: equal texts map to equal vectors, distinct
/// texts to unrelated pseudo-random directions.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let values = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok(EmbeddingVector::new(values))
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("hash-stub:seed={}:dim={}", self.seed, self.dim)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubMode {
    /// Unknown queries fall back to the default fixture, or nothing.
    #[default]
    Lenient,
    /// Unknown queries are an error.
    Strict,
}

#[derive(Debug, Clone, Default)]
pub struct StubSearch {
    mode: StubMode,
    fixtures: HashMap<String, Vec<SearchResult>>,
    default: Option<Vec<SearchResult>>,
}

impl StubSearch {
    pub fn lenient() -> Self {
        Self::default()
    }

    pub fn strict() -> Self {
        Self {
            mode: StubMode::Strict,
            ..Self::default()
        }
    }

    pub fn with_fixture(mut self, query: impl Into<String>, results: Vec<SearchResult>) -> Self {
        self.fixtures.insert(query.into(), results);
        self
    }

    pub fn with_default(mut self, results: Vec<SearchResult>) -> Self {
        self.default = Some(results);
        self
    }
}

impl SearchEngine for StubSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::EmptyQuery);
        }
        let hits = match (self.fixtures.get(query), self.mode) {
            (Some(h), _) => h.clone(),
            (None, StubMode::Strict) => {
                return Err(ProviderError::StubMiss(format!("search {query:?}")))
            }
            (None, StubMode::Lenient) => self.default.clone().unwrap_or_default(),
        };
        Ok(hits.into_iter().take(max_results).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionFixture {
    #[serde(default)]
    pub digest: Option<String>,
    #[serde(flatten)]
    pub rule: StubRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFixture {
    /// Exact query; absent means this is the fallback for unknown queries.
    #[serde(default)]
    pub query: Option<String>,
    pub results: Vec<FixtureHit>,
}

/// Fixture file contents (TOML).
///
/// ```toml
/// search_mode = "lenient"
///
/// [[completion]]
/// tag = "questions"
/// contains = ["Base product: Coke Zero 500ml\n"]
/// response = "..."
///
/// [[search]]
/// query = "Is ..."
/// results = [{ url = "https://...", title = "...", snippet = "..." }]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    #[serde(default)]
    pub search_mode: StubMode,
    #[serde(default)]
    pub completion: Vec<CompletionFixture>,
    #[serde(default)]
    pub search: Vec<SearchFixture>,
}

impl StubScript {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stub script serializes")
    }

    pub fn chat(&self) -> StubChat {
        let mut chat = StubChat::new();
        for f in &self.completion {
            chat = match &f.digest {
                Some(d) => chat.with_digest(d.clone(), f.rule.response.clone()),
                None => chat.with_rule(f.rule.clone()),
            };
        }
        chat
    }

    pub fn search_engine(&self) -> StubSearch {
        let mut s = StubSearch {
            mode: self.search_mode,
            ..StubSearch::default()
        };
        for f in &self.search {
            let hits = f
                .results
                .iter()
                .enumerate()
                .map(|(i, h)| SearchResult {
                    url: h.url.clone(),
                    title: h.title.clone(),
                    snippet: h.snippet.clone(),
                    rank: i as u32 + 1,
                })
                .collect();
            match &f.query {
                Some(q) => s.fixtures.insert(q.clone(), hits),
                None => s.default.replace(hits),
            };
        }
        s
    }
}
