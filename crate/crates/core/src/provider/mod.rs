//! Contracts for the three external capabilities (chat completion, text
//! embedding, web search), the call log, and the [`Providers`] bundle the
//! engine talks to.

mod live;
mod stub;

use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PairId;
use crate::Embedding;

pub use live::{HttpSearch, LiveConfig, OpenAiChat, OpenAiEmbedder, RetryPolicy};
pub use stub::{
    request_digest, CompletionFixture, FixtureHit, FnChat, HashEmbedder, SearchFixture, StubChat, StubMode,
    StubRule, StubScript, StubSearch,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider refused the request: {0}")]
    Refused(String),
    #[error("no scripted response for request ({0})")]
    StubMiss(String),
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("text to embed is empty")]
    EmptyText,
    #[error("search query is empty")]
    EmptyQuery,
}

impl ProviderError {
    /// Network failures and stub misses; these map to "upstream down".
    pub fn is_unavailable(&self) -> bool {
        matches!(self, ProviderError::Unavailable(_) | ProviderError::StubMiss(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub response_schema_tag: String,
}

impl CompletionRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, tag: impl Into<String>) -> Self {
        Self {
            system_prompt: system.into(),
            user_prompt: user.into(),
            temperature: 0.0,
            response_schema_tag: tag.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub rank: u32,
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError>;
    fn dim(&self) -> usize;
    /// Stable description of model and settings; stores refuse to open under
    /// a different identity.
    fn identity(&self) -> String;
}

pub trait SearchEngine: Send + Sync {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Chat,
    Embedding,
    Search,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Chat => "chat",
            ProviderKind::Embedding => "embedding",
            ProviderKind::Search => "search",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub provider: ProviderKind,
    pub pair_id: Option<PairId>,
    pub elapsed_ms: u64,
    pub ok: bool,
}

/// Append-only record of every provider call. Cheap to clone; clones share
/// the same log.
#[derive(Debug, Clone, Default)]
pub struct CallLog {
    inner: Arc<Mutex<Vec<CallRecord>>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, provider: ProviderKind, pair_id: Option<PairId>, elapsed_ms: u64, ok: bool) {
        let mut log = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let seq = log.len() as u64;
        log.push(CallRecord {
            seq,
            provider,
            pair_id,
            elapsed_ms,
            ok,
        });
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls of one kind attributed to a pair.
    pub fn count_for(&self, pair_id: PairId, provider: ProviderKind) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .filter(|r| r.pair_id == Some(pair_id) && r.provider == provider)
            .count()
    }

    pub fn count(&self, provider: ProviderKind) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .filter(|r| r.provider == provider)
            .count()
    }
}

/// Attribution and per-pair tallies for the calls made on behalf of one unit
/// of work.
#[derive(Debug, Default)]
pub struct CallScope {
    pair_id: Option<PairId>,
    completions: AtomicU32,
    embeddings: AtomicU32,
    searches: AtomicU32,
}

impl CallScope {
    pub fn for_pair(pair_id: PairId) -> Self {
        Self {
            pair_id: Some(pair_id),
            ..Self::default()
        }
    }

    pub fn detached() -> Self {
        Self::default()
    }

    pub fn pair_id(&self) -> Option<PairId> {
        self.pair_id
    }

    pub fn completions(&self) -> u32 {
        self.completions.load(Ordering::Relaxed)
    }

    pub fn embeddings(&self) -> u32 {
        self.embeddings.load(Ordering::Relaxed)
    }

    pub fn searches(&self) -> u32 {
        self.searches.load(Ordering::Relaxed)
    }
}

/// The engine's view of the outside world.
#[derive(Clone)]
pub struct Providers {
    chat: Arc<dyn ChatModel>,
    embedder: Arc<dyn Embedder>,
    search: Arc<dyn SearchEngine>,
    log: CallLog,
}

impl fmt::Debug for Providers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Providers")
            .field("embedder", &self.embedder.identity())
            .field("calls", &self.log.len())
            .finish()
    }
}

impl Providers {
    pub fn new(
        chat: Arc<dyn ChatModel>,
        embedder: Arc<dyn Embedder>,
        search: Arc<dyn SearchEngine>,
    ) -> Self {
        Self {
            chat,
            embedder,
            search,
            log: CallLog::new(),
        }
    }

    pub fn call_log(&self) -> &CallLog {
        &self.log
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn complete(&self, scope: &CallScope, req: &CompletionRequest) -> Result<String, ProviderError> {
        if req.system_prompt.trim().is_empty() || req.user_prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        scope.completions.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let out = self.chat.complete(req);
        self.log.push(ProviderKind::Chat, scope.pair_id, elapsed(started), out.is_ok());
        out
    }

    pub fn embed(&self, scope: &CallScope, text: &str) -> Result<Embedding, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        scope.embeddings.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let out = self.embedder.embed(text).and_then(|v| {
            if v.dim() != self.embedder.dim() {
                Err(ProviderError::BadResponse(format!(
                    "embedding has dimension {}, expected {}",
                    v.dim(),
                    self.embedder.dim()
                )))
            } else if v.is_zero() {
                Err(ProviderError::BadResponse("all-zero embedding".into()))
            } else {
                Ok(v)
            }
        });
        self.log.push(ProviderKind::Embedding, scope.pair_id, elapsed(started), out.is_ok());
        out
    }

    pub fn search(
        &self,
        scope: &CallScope,
        query: &str,
        max_results: usize,
    ) -> Result<Vec<SearchResult>, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::EmptyQuery);
        }
        scope.searches.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let out = self.search.search(query, max_results).map(|mut hits| {
            hits.truncate(max_results);
            for (i, h) in hits.iter_mut().enumerate() {
                h.rank = i as u32 + 1;
            }
            hits
        });
        self.log.push(ProviderKind::Search, scope.pair_id, elapsed(started), out.is_ok());
        out
    }
}

fn elapsed(started: Instant) -> u64 {
    started.elapsed().as_millis() as u64
}
