//! The reasoning-trace store: question sets with their answers, keyed by the
//! concatenated question string and retrieved by exact cosine top-k.
//!
//! On disk a store is a JSON-lines file (one trace per line, append-only) and
//! a `<file>.meta.json` sidecar recording the embedding dimension and the
//! identity of the embedder that produced the vectors.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentError, Agents, EvidenceSet, QuestionSet};
use crate::clock::{Clock, Timestamp};
use crate::model::ProductPair;
use crate::provider::{CallScope, ProviderError, Providers};
use crate::vector::{top_k, VectorError};
use crate::Embedding;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TAU_SIM: f64 = 0.85;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("question set is empty")]
    NoQuestions,
    #[error("not a concatenated question key: {0}")]
    BadConcat(String),
    #[error("{answers} answers do not line up with {questions} questions")]
    Misaligned { questions: usize, answers: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding dimension {found} does not match store dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("store was built with embedder {found:?}, configured {expected:?}")]
    ConfigMismatch { expected: String, found: String },
    #[error("embedding is all zeros")]
    ZeroEmbedding,
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("persistence failure: {0}")]
    Persistence(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn io_err(path: &Path, e: std::io::Error) -> TraceError {
    TraceError::Persistence(format!("{}: {e}", path.display()))
}

/// `Question1: {q1}; Question2: {q2}; ...` with no trailing separator.
pub fn concat_texts<S: AsRef<str>>(texts: &[S]) -> Result<String, TraceError> {
    if texts.is_empty() {
        return Err(TraceError::NoQuestions);
    }
    Ok(texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("Question{}: {}", i + 1, t.as_ref()))
        .collect::<Vec<_>>()
        .join("; "))
}

pub fn concat_questions(qs: &QuestionSet) -> Result<String, TraceError> {
    concat_texts(&qs.texts())
}

/// Split a concatenated key back into question texts. Exact whenever no
/// question text itself contains the next item's `; Question<n>: ` marker.
pub fn parse_concat(key: &str) -> Result<Vec<String>, TraceError> {
    let mut rest = key
        .strip_prefix("Question1: ")
        .ok_or_else(|| TraceError::BadConcat(key.chars().take(40).collect()))?;
    let mut out = Vec::new();
    let mut n = 2;
    loop {
        let marker = format!("; Question{n}: ");
        match rest.find(&marker) {
            Some(i) => {
                out.push(rest[..i].to_string());
                rest = &rest[i + marker.len()..];
                n += 1;
            }
            None => {
                out.push(rest.to_string());
                return Ok(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Machine,
    HumanValidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub trace_id: u64,
    pub concat_key: String,
    pub questions: QuestionSet,
    pub answers: EvidenceSet,
    pub embedding: Embedding,
    pub validation_status: ValidationStatus,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone)]
pub struct RetrievalHit {
    pub trace: Arc<ReasoningTrace>,
    pub similarity: f64,
}

/// Wire view of a hit: everything except the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSummary {
    pub rank: usize,
    pub trace_id: u64,
    pub similarity: f64,
    pub concat_key: String,
    pub validation_status: ValidationStatus,
    pub created_at: Timestamp,
    pub questions: Vec<String>,
    pub answers: Vec<String>,
}

impl RetrievalHit {
    pub fn summary(&self, rank: usize) -> HitSummary {
        HitSummary {
            rank,
            trace_id: self.trace.trace_id,
            similarity: self.similarity,
            concat_key: self.trace.concat_key.clone(),
            validation_status: self.trace.validation_status,
            created_at: self.trace.created_at,
            questions: self.trace.questions.texts().iter().map(|s| s.to_string()).collect(),
            answers: self
                .trace
                .answers
                .answers
                .iter()
                .map(|a| a.answer_text.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sufficiency {
    Sufficient,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyDecision {
    pub outcome: Sufficiency,
    pub reused_trace_id: Option<u64>,
    pub reason: String,
    /// Whether the judge completion ran.
    pub judged: bool,
}

impl SufficiencyDecision {
    fn insufficient(reason: impl Into<String>, judged: bool) -> Self {
        Self {
            outcome: Sufficiency::Insufficient,
            reused_trace_id: None,
            reason: reason.into(),
            judged,
        }
    }

    pub fn is_sufficient(&self) -> bool {
        self.outcome == Sufficiency::Sufficient
    }
}

/// Two-stage reuse gate. Stage one compares the best similarity against
/// `tau_sim` without any provider call; stage two asks the judge whether the
/// best hit's stored answers settle the current questions.
pub fn assess_information_gain(
    agents: &Agents,
    providers: &Providers,
    scope: &CallScope,
    hits: &[RetrievalHit],
    pair: &ProductPair,
    qs: &QuestionSet,
    tau_sim: f64,
) -> Result<SufficiencyDecision, AgentError> {
    let Some(best) = hits.first() else {
        return Ok(SufficiencyDecision::insufficient("no candidates", false));
    };
    if best.similarity < tau_sim {
        return Ok(SufficiencyDecision::insufficient(
            format!(
                "best similarity {:.4} below threshold {tau_sim}",
                best.similarity
            ),
            false,
        ));
    }
    let (ok, reason) = agents.judge_sufficiency(
        providers,
        scope,
        pair,
        qs,
        &best.trace.questions,
        &best.trace.answers,
    )?;
    Ok(if ok {
        SufficiencyDecision {
            outcome: Sufficiency::Sufficient,
            reused_trace_id: Some(best.trace.trace_id),
            reason,
            judged: true,
        }
    } else {
        SufficiencyDecision::insufficient(reason, true)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format: u32,
    pub dim: usize,
    pub embedder: String,
    pub config_hash: String,
}

impl StoreMeta {
    pub fn new(dim: usize, embedder: impl Into<String>) -> Self {
        let embedder = embedder.into();
        let digest = Sha256::digest(format!("{embedder}\x1f{dim}").as_bytes());
        let config_hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self {
            format: 1,
            dim,
            embedder,
            config_hash,
        }
    }

    pub fn for_providers(p: &Providers) -> Self {
        Self::new(p.embedding_dim(), p.embedder().identity())
    }

    /// Refuse a store whose vectors came from another embedding space.
    pub fn check_compatible(&self, found: &StoreMeta) -> Result<(), TraceError> {
        if found.dim != self.dim {
            return Err(TraceError::DimensionMismatch {
                expected: self.dim,
                found: found.dim,
            });
        }
        if found.config_hash != self.config_hash {
            return Err(TraceError::ConfigMismatch {
                expected: self.embedder.clone(),
                found: found.embedder.clone(),
            });
        }
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn read_meta(path: &Path) -> Result<StoreMeta, TraceError> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    serde_json::from_str(&text).map_err(|e| TraceError::Corrupt {
        path: side.display().to_string(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn write_meta(path: &Path, meta: &StoreMeta) -> Result<(), TraceError> {
    let side = sidecar_path(path);
    let tmp = side.with_extension("json.tmp");
    let body = serde_json::to_string_pretty(meta).expect("meta serializes") + "\n";
    fs::write(&tmp, body).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, &side).map_err(|e| io_err(&side, e))
}

/// Parse a trace file, ignoring (and reporting) an incomplete final line.
/// Returns the traces and the byte length of the complete prefix.
pub fn read_traces(path: &Path, meta: &StoreMeta) -> Result<(Vec<ReasoningTrace>, u64, bool), TraceError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(path, e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let torn = complete < bytes.len();
    let corrupt = |line: usize, reason: String| TraceError::Corrupt {
        path: path.display().to_string(),
        line,
        reason,
    };
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| corrupt(0, e.to_string()))?;
    let mut traces: Vec<ReasoningTrace> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: ReasoningTrace =
            serde_json::from_str(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        if t.embedding.dim() != meta.dim {
            return Err(corrupt(i + 1, format!("embedding dimension {}", t.embedding.dim())));
        }
        if concat_questions(&t.questions).ok().as_deref() != Some(t.concat_key.as_str()) {
            return Err(corrupt(i + 1, "concat_key does not match questions".into()));
        }
        if traces.last().is_some_and(|p| p.trace_id >= t.trace_id) {
            return Err(corrupt(i + 1, format!("trace_id {} out of order", t.trace_id)));
        }
        traces.push(t);
    }
    Ok((traces, complete as u64, torn))
}

fn check_aligned(qs: &QuestionSet, ans: &EvidenceSet) -> Result<(), TraceError> {
    let aligned = qs.len() == ans.answers.len()
        && qs
            .questions
            .iter()
            .zip(&ans.answers)
            .all(|(q, a)| q.question_id == a.question_id);
    if aligned {
        Ok(())
    } else {
        Err(TraceError::Misaligned {
            questions: qs.len(),
            answers: ans.answers.len(),
        })
    }
}

/// Concurrent readers, one writer. Retrieval works on a snapshot of the
/// trace list, so it never sees a half-inserted trace.
pub struct TraceStore {
    meta: StoreMeta,
    path: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    traces: RwLock<Arc<Vec<Arc<ReasoningTrace>>>>,
    writer: Mutex<Option<File>>,
    durable: bool,
}

impl std::fmt::Debug for TraceStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceStore")
            .field("path", &self.path)
            .field("meta", &self.meta)
            .field("len", &self.len())
            .finish()
    }
}

impl TraceStore {
    pub fn in_memory(meta: StoreMeta, clock: Arc<dyn Clock>) -> Self {
        Self {
            meta,
            path: None,
            clock,
            traces: RwLock::new(Arc::new(Vec::new())),
            writer: Mutex::new(None),
            durable: false,
        }
    }

    /// Open or create the store at `path`. An existing sidecar must match
    /// `meta`; a torn final line left by a crash is cut off.
    pub fn open(path: &Path, meta: StoreMeta, clock: Arc<dyn Clock>) -> Result<Self, TraceError> {
        if sidecar_path(path).exists() {
            meta.check_compatible(&read_meta(path)?)?;
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            write_meta(path, &meta)?;
        }
        let (traces, complete, torn) = read_traces(path, &meta)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        if torn {
            tracing::warn!(path = %path.display(), "dropping incomplete final trace record");
            file.set_len(complete).map_err(|e| io_err(path, e))?;
        }
        Ok(Self {
            meta,
            path: Some(path.to_path_buf()),
            clock,
            traces: RwLock::new(Arc::new(traces.into_iter().map(Arc::new).collect())),
            writer: Mutex::new(Some(file)),
            durable: false,
        })
    }

    /// Open an existing store with whatever configuration its sidecar records.
    pub fn open_existing(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, TraceError> {
        let meta = read_meta(path)?;
        Self::open(path, meta, clock)
    }

    /// Sync every insert to disk before returning.
    pub fn with_durable_writes(mut self, on: bool) -> Self {
        self.durable = on;
        self
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> Arc<Vec<Arc<ReasoningTrace>>> {
        self.traces.read().expect("trace lock poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, trace_id: u64) -> Option<Arc<ReasoningTrace>> {
        let snap = self.snapshot();
        snap.binary_search_by_key(&trace_id, |t| t.trace_id)
            .ok()
            .map(|i| snap[i].clone())
    }

    /// Embed the concatenated questions and append a new trace.
    pub fn insert_trace(
        &self,
        providers: &Providers,
        scope: &CallScope,
        qs: &QuestionSet,
        ans: &EvidenceSet,
        status: ValidationStatus,
    ) -> Result<Arc<ReasoningTrace>, TraceError> {
        check_aligned(qs, ans)?;
        let key = concat_questions(qs)?;
        let embedding = providers.embed(scope, &key)?;
        self.insert_embedded(qs, ans, status, embedding)
    }

    /// Append a trace whose embedding was computed elsewhere.
    pub fn insert_embedded(
        &self,
        qs: &QuestionSet,
        ans: &EvidenceSet,
        status: ValidationStatus,
        embedding: Embedding,
    ) -> Result<Arc<ReasoningTrace>, TraceError> {
        check_aligned(qs, ans)?;
        let concat_key = concat_questions(qs)?;
        if embedding.dim() != self.meta.dim {
            return Err(TraceError::DimensionMismatch {
                expected: self.meta.dim,
                found: embedding.dim(),
            });
        }
        if embedding.is_zero() {
            return Err(TraceError::ZeroEmbedding);
        }

        let mut writer = self.writer.lock().expect("writer lock poisoned");
        let current = self.snapshot();
        let trace = Arc::new(ReasoningTrace {
            trace_id: current.last().map_or(1, |t| t.trace_id + 1),
            concat_key,
            questions: qs.clone(),
            answers: ans.clone(),
            embedding,
            validation_status: status,
            created_at: self.clock.now(),
        });
        if let Some(file) = writer.as_mut() {
            let path = self.path.as_deref().expect("file-backed store has a path");
            let mut line = serde_json::to_vec(&*trace).expect("trace serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| io_err(path, e))?;
            if self.durable {
                file.sync_data().map_err(|e| io_err(path, e))?;
            }
        }
        let mut next = Vec::with_capacity(current.len() + 1);
        next.extend(current.iter().cloned());
        next.push(trace.clone());
        *self.traces.write().expect("trace lock poisoned") = Arc::new(next);
        Ok(trace)
    }

    pub fn retrieve_topk(
        &self,
        providers: &Providers,
        scope: &CallScope,
        query_key: &str,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, TraceError> {
        if k == 0 {
            return Err(TraceError::ZeroK);
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let q = providers.embed(scope, query_key)?;
        self.retrieve_by_vector(&q, k)
    }

    /// Exact top-k over the live traces. A trace is superseded, and skipped,
    /// when a later human-validated trace carries the same key.
    pub fn retrieve_by_vector(&self, query: &Embedding, k: usize) -> Result<Vec<RetrievalHit>, TraceError> {
        if k == 0 {
            return Err(TraceError::ZeroK);
        }
        if query.dim() != self.meta.dim {
            return Err(TraceError::DimensionMismatch {
                expected: self.meta.dim,
                found: query.dim(),
            });
        }
        let snap = self.snapshot();
        let live = live_traces(&snap);
        let ranked = top_k(query, live.iter().map(|t| (t.trace_id, &t.embedding)), k).map_err(|e| match e {
            VectorError::DimensionMismatch { left, right } => TraceError::DimensionMismatch {
                expected: left,
                found: right,
            },
            VectorError::ZeroVector => TraceError::ZeroEmbedding,
        })?;
        Ok(ranked
            .into_iter()
            .map(|(id, similarity)| RetrievalHit {
                trace: live
                    .iter()
                    .find(|t| t.trace_id == id)
                    .map(|t| (*t).clone())
                    .expect("ranked id comes from live set"),
                similarity,
            })
            .collect())
    }
}

/// Traces not superseded by a later human-validated trace with the same key.
pub fn live_traces(all: &[Arc<ReasoningTrace>]) -> Vec<&Arc<ReasoningTrace>> {
    let mut corrected: HashSet<&str> = HashSet::new();
    let mut out = Vec::with_capacity(all.len());
    for t in all.iter().rev() {
        if !corrected.contains(t.concat_key.as_str()) {
            out.push(t);
        }
        if t.validation_status == ValidationStatus::HumanValidated {
            corrected.insert(&t.concat_key);
        }
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::grammar::render_record;
    use crate::agents::TAG_SUFFICIENCY;
    use crate::clock::LogicalClock;
    use crate::model::{EvidenceAnswer, MatchDimension, PairId, PairIdGen, Resolution, Source};
    use crate::provider::{HashEmbedder, ProviderKind, StubChat, StubRule, StubSearch};

    fn providers(chat: StubChat) -> Providers {
        Providers::new(
            Arc::new(chat),
            Arc::new(HashEmbedder::new(16, 7)),
            Arc::new(StubSearch::lenient()),
        )
    }

    fn qs(pair: u64, texts: &[&str]) -> QuestionSet {
        QuestionSet::from_texts(PairId(pair), texts.iter().map(|t| (MatchDimension::Brand, *t))).unwrap()
    }

    fn answers(q: &QuestionSet) -> EvidenceSet {
        EvidenceSet {
            pair_id: q.pair_id,
            answers: q
                .questions
                .iter()
                .map(|x| EvidenceAnswer {
                    question_id: x.question_id.clone(),
                    answer_text: format!("answer to {}", x.text),
                    sources: vec![Source {
                        url: "https://example.com".into(),
                        snippet: "s".into(),
                    }],
                    resolved_by: Resolution::FreshSearch,
                })
                .collect(),
        }
    }

    fn store(p: &Providers) -> TraceStore {
        TraceStore::in_memory(StoreMeta::for_providers(p), Arc::new(LogicalClock::new()))
    }

    #[test]
    fn concat_format() {
        assert_eq!(concat_texts(&["Is A a brand?"]).unwrap(), "Question1: Is A a brand?");
        assert_eq!(concat_texts(&["a", "b"]).unwrap(), "Question1: a; Question2: b");
        assert!(matches!(concat_texts::<&str>(&[]), Err(TraceError::NoQuestions)));
        assert_eq!(parse_concat("Question1: a; b; Question2: c").unwrap(), ["a; b", "c"]);
        assert!(parse_concat("Q1: a").is_err());
    }

    #[test]
    fn empty_store_returns_nothing_without_embedding() {
        let p = providers(StubChat::new());
        let s = store(&p);
        let scope = CallScope::detached();
        assert!(s.retrieve_topk(&p, &scope, "Question1: x", 5).unwrap().is_empty());
        assert_eq!(scope.embeddings(), 0);
        assert!(matches!(s.retrieve_topk(&p, &scope, "x", 0), Err(TraceError::ZeroK)));
    }

    #[test]
    fn insert_then_retrieve_same_key() {
        let p = providers(StubChat::new());
        let s = store(&p);
        let scope = CallScope::detached();
        let mut ids = Vec::new();
        for t in ["Is it Coke?", "Is it Pepsi?", "Same size?"] {
            let q = qs(1, &[t]);
            ids.push(s.insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::Machine).unwrap().trace_id);
        }
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let hits = s.retrieve_topk(&p, &scope, "Question1: Is it Pepsi?", 5).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].trace.trace_id, ids[1]);
        assert!((hits[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn misaligned_insert_is_rejected() {
        let p = providers(StubChat::new());
        let s = store(&p);
        let q = qs(1, &["a", "b"]);
        let mut a = answers(&q);
        a.answers.pop();
        let err = s
            .insert_trace(&p, &CallScope::detached(), &q, &a, ValidationStatus::Machine)
            .unwrap_err();
        assert!(matches!(err, TraceError::Misaligned { questions: 2, answers: 1 }));
        assert!(s.is_empty());
    }

    #[test]
    fn correction_supersedes_machine_trace() {
        let p = providers(StubChat::new());
        let s = store(&p);
        let scope = CallScope::detached();
        let q = qs(1, &["Same brand?"]);
        let machine = s.insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::Machine).unwrap();
        let human = s
            .insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::HumanValidated)
            .unwrap();
        let hits = s.retrieve_topk(&p, &scope, &machine.concat_key, 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].trace.trace_id, human.trace_id);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn gate_below_threshold_makes_no_completion() {
        let p = providers(StubChat::new());
        let s = store(&p);
        let scope = CallScope::detached();
        let q = qs(1, &["Same brand?"]);
        s.insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::Machine).unwrap();
        let mut hits = s.retrieve_topk(&p, &scope, &concat_questions(&q).unwrap(), 5).unwrap();
        hits[0].similarity = 0.40;
        let pair = PairIdGen::new().new_pair("a", "b").unwrap();
        let d = assess_information_gain(&Agents::default(), &p, &scope, &hits, &pair, &q, 0.85).unwrap();
        assert_eq!(d.outcome, Sufficiency::Insufficient);
        assert!(!d.judged);
        assert_eq!(p.call_log().count(ProviderKind::Chat), 0);

        let d = assess_information_gain(&Agents::default(), &p, &scope, &[], &pair, &q, 0.85).unwrap();
        assert_eq!(d.reason, "no candidates");
    }

    #[test]
    fn gate_reuses_validated_duplicate() {
        let chat = StubChat::new().with_rule(
            StubRule::tagged(TAG_SUFFICIENCY).respond(render_record([
                ("sufficient", "yes".to_string()),
                ("reason", "stored answers cover the brand question".to_string()),
            ])),
        );
        let p = providers(chat);
        let s = store(&p);
        let scope = CallScope::detached();
        let q = qs(1, &["Same brand?"]);
        let t = s
            .insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::HumanValidated)
            .unwrap();
        let again = qs(2, &["Same brand?"]);
        let hits = s.retrieve_topk(&p, &scope, &concat_questions(&again).unwrap(), 5).unwrap();
        let pair = PairIdGen::starting_at(2).new_pair("a", "b").unwrap();
        let d = assess_information_gain(&Agents::default(), &p, &scope, &hits, &pair, &again, 0.85).unwrap();
        assert!(d.is_sufficient());
        assert_eq!(d.reused_trace_id, Some(t.trace_id));
        assert_eq!(p.call_log().count(ProviderKind::Chat), 1);
    }

    #[test]
    fn file_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.jsonl");
        let p = providers(StubChat::new());
        let meta = StoreMeta::for_providers(&p);
        let scope = CallScope::detached();
        let written: Vec<ReasoningTrace> = {
            let s = TraceStore::open(&path, meta.clone(), Arc::new(LogicalClock::new())).unwrap();
            (0..4)
                .map(|i| {
                    let q = qs(i, &[&format!("question {i}?"), "second?"]);
                    (*s.insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::Machine).unwrap()).clone()
                })
                .collect()
        };
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"trace_id\": 5, \"concat_").unwrap();
        drop(f);

        let s = TraceStore::open(&path, meta.clone(), Arc::new(LogicalClock::new())).unwrap();
        let loaded: Vec<ReasoningTrace> = s.snapshot().iter().map(|t| (**t).clone()).collect();
        assert_eq!(loaded, written);
        assert!(fs::read(&path).unwrap().ends_with(b"\n"));
        let q = qs(9, &["after reload?"]);
        assert_eq!(
            s.insert_trace(&p, &scope, &q, &answers(&q), ValidationStatus::Machine).unwrap().trace_id,
            5
        );

        let other = StoreMeta::new(meta.dim + 1, "other");
        assert!(matches!(
            TraceStore::open(&path, other, Arc::new(LogicalClock::new())),
            Err(TraceError::DimensionMismatch { .. })
        ));
    }
}
