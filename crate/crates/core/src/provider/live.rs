//! HTTP adapters for live providers.
//!
//! Chat and embeddings speak the OpenAI-compatible REST shape. Web search is a
//! configurable JSON endpoint: `GET {url}?q=<query>&count=<n>` returning
//! `{"results": [{"url", "title", "snippet"}]}`.

use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{ChatModel, CompletionRequest, Embedder, ProviderError, SearchEngine, SearchResult};
use crate::vector::EmbeddingVector;
use crate::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub retries: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub chat_url: String,
    pub chat_model: String,
    pub embedding_url: String,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub search_url: String,
    pub api_key: Option<String>,
    pub search_api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

fn client(timeout: Duration) -> Result<Client, ProviderError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ProviderError::Unavailable(format!("http client: {e}")))
}

fn send_json<T: for<'de> Deserialize<'de>>(
    policy: RetryPolicy,
    build: impl Fn() -> RequestBuilder,
) -> Result<T, ProviderError> {
    let mut attempt = 0;
    loop {
        let outcome = match build().send() {
            Err(e) => Failure::Transient(e.to_string()),
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return resp
                        .json::<T>()
                        .map_err(|e| ProviderError::BadResponse(e.to_string()));
                }
                let body = resp.text().unwrap_or_default();
                let msg = format!("HTTP {status}: {}", truncate(&body, 200));
                if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                    Failure::Transient(msg)
                } else {
                    Failure::Fatal(msg)
                }
            }
        };
        match outcome {
            Failure::Fatal(msg) => return Err(ProviderError::Refused(msg)),
            Failure::Transient(msg) if attempt >= policy.retries => {
                return Err(ProviderError::Unavailable(format!(
                    "{msg} (after {} attempts)",
                    attempt + 1
                )))
            }
            Failure::Transient(msg) => {
                let wait = policy.base_backoff * 2u32.saturating_pow(attempt);
                tracing::warn!(attempt, ?wait, "transient provider failure: {msg}");
                thread::sleep(wait);
                attempt += 1;
            }
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn with_key(req: RequestBuilder, key: &Option<String>) -> RequestBuilder {
    match key {
        Some(k) => req.bearer_auth(k),
        None => req,
    }
}

pub struct OpenAiChat {
    http: Client,
    url: String,
    model: String,
    key: Option<String>,
    retry: RetryPolicy,
}

impl OpenAiChat {
    pub fn new(cfg: &LiveConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            http: client(cfg.timeout)?,
            url: cfg.chat_url.clone(),
            model: cfg.chat_model.clone(),
            key: cfg.api_key.clone(),
            retry: cfg.retry,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl ChatModel for OpenAiChat {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
        });
        let resp: ChatResponse = send_json(self.retry, || {
            with_key(self.http.post(&self.url), &self.key).json(&body)
        })?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::BadResponse("completion has no content".into()))
    }
}

pub struct OpenAiEmbedder {
    http: Client,
    url: String,
    model: String,
    dim: usize,
    key: Option<String>,
    retry: RetryPolicy,
}

impl OpenAiEmbedder {
    pub fn new(cfg: &LiveConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            http: client(cfg.timeout)?,
            url: cfg.embedding_url.clone(),
            model: cfg.embedding_model.clone(),
            dim: cfg.embedding_dim,
            key: cfg.api_key.clone(),
            retry: cfg.retry,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl Embedder for OpenAiEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let body = json!({"model": self.model, "input": text});
        let resp: EmbeddingResponse = send_json(self.retry, || {
            with_key(self.http.post(&self.url), &self.key).json(&body)
        })?;
        let values = resp
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ProviderError::BadResponse("no embedding returned".into()))?;
        if values.len() != self.dim {
            return Err(ProviderError::BadResponse(format!(
                "model returned dimension {}, configured {}",
                values.len(),
                self.dim
            )));
        }
        Ok(EmbeddingVector::new(values))
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("openai:{}:dim={}", self.model, self.dim)
    }
}

pub struct HttpSearch {
    http: Client,
    url: String,
    key: Option<String>,
    retry: RetryPolicy,
}

impl HttpSearch {
    pub fn new(cfg: &LiveConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            http: client(cfg.timeout)?,
            url: cfg.search_url.clone(),
            key: cfg.search_api_key.clone(),
            retry: cfg.retry,
        })
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    snippet: String,
}

impl SearchEngine for HttpSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::EmptyQuery);
        }
        let count = max_results.to_string();
        let resp: SearchResponse = send_json(self.retry, || {
            with_key(self.http.get(&self.url), &self.key)
                .query(&[("q", query), ("count", count.as_str())])
        })?;
        Ok(resp
            .results
            .into_iter()
            .take(max_results)
            .enumerate()
            .map(|(i, h)| SearchResult {
                url: h.url,
                title: h.title,
                snippet: h.snippet,
                rank: i as u32 + 1,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn unreachable_cfg() -> LiveConfig {
        LiveConfig {
            // port 9 on loopback: connection refused
            chat_url: "http://127.0.0.1:9/v1/chat/completions".into(),
            chat_model: "gpt-4o".into(),
            embedding_url: "http://127.0.0.1:9/v1/embeddings".into(),
            embedding_model: "text-embedding-3-small".into(),
            embedding_dim: 8,
            search_url: "http://127.0.0.1:9/search".into(),
            api_key: None,
            search_api_key: None,
            timeout: Duration::from_secs(2),
            retry: RetryPolicy {
                retries: 2,
                base_backoff: Duration::from_millis(10),
            },
        }
    }

    #[test]
    fn unreachable_endpoint_is_unavailable_after_retries() {
        let cfg = unreachable_cfg();
        let chat = OpenAiChat::new(&cfg).unwrap();
        let started = Instant::now();
        let err = chat
            .complete(&CompletionRequest::new("s", "u", "t"))
            .unwrap_err();
        match err {
            ProviderError::Unavailable(msg) => assert!(msg.contains("after 3 attempts"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        // backoff 10ms + 20ms
        assert!(started.elapsed() >= Duration::from_millis(30));
        assert!(OpenAiEmbedder::new(&cfg).unwrap().embed("x").unwrap_err().is_unavailable());
        assert!(HttpSearch::new(&cfg).unwrap().search("x", 3).unwrap_err().is_unavailable());
    }
}
