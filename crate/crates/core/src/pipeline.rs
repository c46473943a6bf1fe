//! Per-pair orchestration for every mapping mode, escalation to the review
//! queue, review feedback into the trace store, and batch execution.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Agents, EvidenceSet, Exemplar, QuestionSet};
use crate::model::{
    EvidenceAnswer, MappingResult, MatchLabel, MatchVerdict, PairId, PairIdGen, ProductPair,
    Provenance, Resolution, Source,
};
use crate::provider::{CallScope, ProviderError, Providers};
use crate::review::{EscalationReason, ReviewDecision, ReviewError, ReviewItem, ReviewQueue};
use crate::rules::{rule_verdict, BrandDictionary, NormalizationConfig, RuleError};
use crate::traces::{
    assess_information_gain, concat_questions, TraceError, TraceStore, ValidationStatus, DEFAULT_K,
    DEFAULT_TAU_SIM,
};

pub const DEFAULT_THETA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    Rule,
    ZeroShot,
    FewShot,
    WebSearch,
    Q2k,
}

impl MappingMode {
    pub const ALL: [MappingMode; 5] = [
        MappingMode::Rule,
        MappingMode::ZeroShot,
        MappingMode::FewShot,
        MappingMode::WebSearch,
        MappingMode::Q2k,
    ];

    pub fn token(self) -> &'static str {
        match self {
            MappingMode::Rule => "rule",
            MappingMode::ZeroShot => "zero_shot",
            MappingMode::FewShot => "few_shot",
            MappingMode::WebSearch => "web_search",
            MappingMode::Q2k => "q2k",
        }
    }

    /// Method name used in report tables.
    pub fn method_name(self) -> &'static str {
        match self {
            MappingMode::Rule => "Rule-Based Matching",
            MappingMode::ZeroShot => "Zero-Shot Inference",
            MappingMode::FewShot => "Few-Shot Inference",
            MappingMode::WebSearch => "Web Search Inference",
            MappingMode::Q2k => "Query2Knowledge (Q2K)",
        }
    }

    pub fn uses_providers(self) -> bool {
        self != MappingMode::Rule
    }
}

impl fmt::Display for MappingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for MappingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected rule, zero_shot, few_shot, web_search or q2k)"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("few-shot mode needs at least one exemplar")]
    MissingExemplars,
    #[error("escalation precondition violated: {0}")]
    NotEscalatable(String),
    #[error("batch cancelled before this pair ran")]
    Cancelled,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

impl PipelineError {
    /// The upstream provider failed (as opposed to bad data or a bug).
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            PipelineError::Agent(AgentError::Provider(e)) | PipelineError::Trace(TraceError::Provider(e)) => Some(e),
            _ => None,
        }
    }

    pub fn is_provider_unavailable(&self) -> bool {
        self.provider_error().is_some_and(ProviderError::is_unavailable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Traces retrieved per lookup.
    pub k: usize,
    /// Similarity a hit needs before the sufficiency judge is consulted.
    pub tau_sim: f64,
    /// Verdicts below this confidence go to review.
    pub theta: f64,
    /// In batches, serialize the store section of each pair in input order so
    /// that any worker count gives the same reuse decisions.
    pub ordered_batches: bool,
    /// Fill `wall_time_ms` from the real clock. Off for runs whose output
    /// must be byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            tau_sim: DEFAULT_TAU_SIM,
            theta: DEFAULT_THETA,
            ordered_batches: true,
            record_wall_time: true,
        }
    }
}

/// One RunLog line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub pair_id: PairId,
    pub mode: MappingMode,
    /// Questions generated for this pair, on every q2k path.
    pub m: u32,
    pub dedup_activated: bool,
    pub web_queries_issued: u32,
    pub completion_calls: u32,
    pub embedding_calls: u32,
    pub gate_judged: bool,
    pub verdict: Option<MatchLabel>,
    pub confidence: Option<f64>,
    pub provenance: Option<Provenance>,
    pub reused_trace_id: Option<u64>,
    pub inserted_trace_id: Option<u64>,
    pub escalated: bool,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
}

impl RunLog {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Everything produced for one pair.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub result: MappingResult,
    pub record: RunRecord,
    pub review_item: Option<ReviewItem>,
}

/// A finished pair inside a batch.
type Slot = (RunRecord, Option<MappingResult>);

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub log: RunLog,
    /// Input-ordered; `None` where the pair failed.
    pub results: Vec<Option<MappingResult>>,
}

/// Running counters for the lifetime of an engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub pairs_processed: u64,
    pub failures: u64,
    pub questions_generated: u64,
    pub dedup_activated: u64,
    pub web_queries: u64,
    pub completion_calls: u64,
    pub escalations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    #[serde(flatten)]
    pub counters: Counters,
    pub dedup_activation_rate: f64,
    pub avg_questions_per_pair: f64,
}

impl Counters {
    pub fn snapshot(self) -> StatsSnapshot {
        let ratio = |num: u64| {
            if self.pairs_processed == 0 {
                0.0
            } else {
                num as f64 / self.pairs_processed as f64
            }
        };
        StatsSnapshot {
            counters: self,
            dedup_activation_rate: ratio(self.dedup_activated),
            avg_questions_per_pair: ratio(self.questions_generated),
        }
    }

    fn add(&mut self, r: &RunRecord) {
        self.pairs_processed += 1;
        self.failures += r.failed() as u64;
        self.questions_generated += r.m as u64;
        self.dedup_activated += r.dedup_activated as u64;
        self.web_queries += r.web_queries_issued as u64;
        self.completion_calls += r.completion_calls as u64;
        self.escalations += r.escalated as u64;
    }
}

/// Admits batch indices into the store section strictly in order.
struct Turnstile {
    next: Mutex<usize>,
    cv: Condvar,
}

impl Turnstile {
    fn new() -> Self {
        Self {
            next: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn wait_for(&self, idx: usize) {
        let mut next = self.next.lock().expect("turnstile poisoned");
        while *next != idx {
            next = self.cv.wait(next).expect("turnstile poisoned");
        }
    }

    fn advance(&self) {
        *self.next.lock().expect("turnstile poisoned") += 1;
        self.cv.notify_all();
    }
}

/// A pair's place in the turnstile. Leaving (explicitly or on drop) waits for
/// the pair's turn if it never entered, so the order is kept on every path.
struct Ticket<'a> {
    gate: Option<(&'a Turnstile, usize)>,
    done: bool,
}

impl<'a> Ticket<'a> {
    fn free() -> Self {
        Self {
            gate: None,
            done: true,
        }
    }

    fn enter(&mut self) {
        if let Some((t, idx)) = self.gate {
            t.wait_for(idx);
        }
    }

    fn leave(&mut self) {
        if self.done {
            return;
        }
        self.done = true;
        if let Some((t, idx)) = self.gate {
            t.wait_for(idx);
            t.advance();
        }
    }
}

impl Drop for Ticket<'_> {
    fn drop(&mut self) {
        self.leave();
    }
}

struct RuleContext {
    cfg: NormalizationConfig,
    brands: BrandDictionary,
}

pub struct Engine {
    providers: Providers,
    agents: Agents,
    store: Arc<TraceStore>,
    queue: Arc<ReviewQueue>,
    rules: RuleContext,
    exemplars: Vec<Exemplar>,
    ids: PairIdGen,
    cfg: EngineConfig,
    counters: Mutex<Counters>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("cfg", &self.cfg)
            .field("store", &self.store)
            .finish()
    }
}

/// Internal result of one pair before bookkeeping.
struct Mapped {
    result: MappingResult,
    m: u32,
    gate_judged: bool,
    reused_trace_id: Option<u64>,
    inserted_trace_id: Option<u64>,
    no_evidence: bool,
}

impl Engine {
    pub fn new(providers: Providers, store: Arc<TraceStore>, queue: Arc<ReviewQueue>) -> Self {
        let cfg = NormalizationConfig::default();
        let brands = BrandDictionary::shipped(&cfg);
        Self {
            providers,
            agents: Agents::default(),
            store,
            queue,
            rules: RuleContext { cfg, brands },
            exemplars: Vec::new(),
            ids: PairIdGen::new(),
            cfg: EngineConfig::default(),
            counters: Mutex::new(Counters::default()),
        }
    }

    pub fn with_config(mut self, cfg: EngineConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn with_agents(mut self, agents: Agents) -> Self {
        self.agents = agents;
        self
    }

    pub fn with_rules(mut self, cfg: NormalizationConfig, brands: BrandDictionary) -> Self {
        self.rules = RuleContext { cfg, brands };
        self
    }

    pub fn with_exemplars(mut self, exemplars: Vec<Exemplar>) -> Self {
        self.exemplars = exemplars;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn store(&self) -> &Arc<TraceStore> {
        &self.store
    }

    pub fn queue(&self) -> &Arc<ReviewQueue> {
        &self.queue
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.counters.lock().expect("counter lock poisoned").snapshot()
    }

    /// Build a pair with an engine-issued id.
    pub fn new_pair(&self, base: &str, compared: &str) -> Result<ProductPair, crate::model::ModelError> {
        self.ids.new_pair(base, compared)
    }

    /// Map one pair and escalate it when needed.
    pub fn map_pair(&self, pair: &ProductPair, mode: MappingMode) -> Result<PairOutcome, PipelineError> {
        let (outcome, record) = self.run_one(0, pair, mode, Ticket::free());
        self.counters.lock().expect("counter lock poisoned").add(&record);
        outcome
    }

    fn run_one(
        &self,
        index: usize,
        pair: &ProductPair,
        mode: MappingMode,
        ticket: Ticket<'_>,
    ) -> (Result<PairOutcome, PipelineError>, RunRecord) {
        let scope = CallScope::for_pair(pair.pair_id());
        let started = Instant::now();
        let mapped = match mode {
            MappingMode::Q2k => self.q2k(pair, &scope, ticket),
            other => {
                drop(ticket);
                self.baseline(pair, other, &scope)
            }
        };
        let mut record = RunRecord {
            index,
            pair_id: pair.pair_id(),
            mode,
            m: 0,
            dedup_activated: false,
            web_queries_issued: scope.searches(),
            completion_calls: scope.completions(),
            embedding_calls: scope.embeddings(),
            gate_judged: false,
            verdict: None,
            confidence: None,
            provenance: None,
            reused_trace_id: None,
            inserted_trace_id: None,
            escalated: false,
            error: None,
        };
        let mut mapped = match mapped {
            Ok(m) => m,
            Err(e) => {
                record.error = Some(e.to_string());
                return (Err(e), record);
            }
        };
        if self.config().record_wall_time {
            mapped.result.wall_time_ms = started.elapsed().as_millis() as u64;
        }
        record.m = mapped.m;
        record.dedup_activated = mapped.result.dedup_activated;
        record.gate_judged = mapped.gate_judged;
        record.verdict = Some(mapped.result.verdict.label);
        record.confidence = Some(mapped.result.verdict.confidence);
        record.provenance = Some(mapped.result.verdict.provenance);
        record.reused_trace_id = mapped.reused_trace_id;
        record.inserted_trace_id = mapped.inserted_trace_id;

        let mut review_item = None;
        if mode == MappingMode::Q2k {
            let reason = if mapped.no_evidence {
                Some(EscalationReason::NoEvidenceFound)
            } else if mapped.result.verdict.confidence < self.cfg.theta {
                Some(EscalationReason::LowConfidence)
            } else {
                None
            };
            if let Some(reason) = reason {
                let trace = mapped.inserted_trace_id.or(mapped.reused_trace_id);
                match self.queue.push(mapped.result.clone(), reason, trace) {
                    Ok(item) => review_item = Some(item),
                    Err(e) => {
                        record.error = Some(e.to_string());
                        return (Err(e.into()), record);
                    }
                }
                record.escalated = true;
            }
        }
        let outcome = PairOutcome {
            result: mapped.result,
            record: record.clone(),
            review_item,
        };
        (Ok(outcome), record)
    }

    fn baseline(&self, pair: &ProductPair, mode: MappingMode, scope: &CallScope) -> Result<Mapped, PipelineError> {
        let verdict = match mode {
            MappingMode::Rule => rule_verdict(pair, &self.rules.cfg, &self.rules.brands)?,
            MappingMode::ZeroShot => self.agents.zero_shot(&self.providers, scope, pair)?,
            MappingMode::FewShot => {
                if self.exemplars.is_empty() {
                    return Err(PipelineError::MissingExemplars);
                }
                self.agents.few_shot(&self.providers, scope, pair, &self.exemplars)?
            }
            MappingMode::WebSearch => self.agents.web_search(&self.providers, scope, pair)?.0,
            MappingMode::Q2k => unreachable!("q2k is not a baseline"),
        };
        Ok(Mapped {
            result: self.result(pair, verdict, QuestionSet::new(pair.pair_id(), vec![])?, vec![], false, scope),
            m: 0,
            gate_judged: false,
            reused_trace_id: None,
            inserted_trace_id: None,
            no_evidence: false,
        })
    }

    fn result(
        &self,
        pair: &ProductPair,
        verdict: MatchVerdict,
        qs: QuestionSet,
        answers: Vec<EvidenceAnswer>,
        dedup_activated: bool,
        scope: &CallScope,
    ) -> MappingResult {
        MappingResult {
            pair: pair.clone(),
            verdict,
            questions: qs.questions,
            answers,
            dedup_activated,
            web_queries_issued: scope.searches(),
            wall_time_ms: 0,
        }
    }

    fn q2k(&self, pair: &ProductPair, scope: &CallScope, mut ticket: Ticket<'_>) -> Result<Mapped, PipelineError> {
        let p = &self.providers;
        let qs = self.agents.generate_questions(p, scope, pair)?;
        let m = qs.len() as u32;
        if qs.is_empty() {
            ticket.leave();
            let verdict = self.agents.synthesize_verdict(
                p,
                scope,
                pair,
                &qs,
                &EvidenceSet::empty(pair.pair_id()),
                Provenance::Q2kFresh,
            )?;
            return Ok(Mapped {
                result: self.result(pair, verdict, qs, vec![], false, scope),
                m,
                gate_judged: false,
                reused_trace_id: None,
                inserted_trace_id: None,
                no_evidence: false,
            });
        }

        ticket.enter();
        let key = concat_questions(&qs)?;
        let hits = self.store.retrieve_topk(p, scope, &key, self.cfg.k)?;
        let decision = assess_information_gain(&self.agents, p, scope, &hits, pair, &qs, self.cfg.tau_sim)?;

        if let Some(id) = decision.reused_trace_id {
            ticket.leave();
            let trace = hits
                .iter()
                .find(|h| h.trace.trace_id == id)
                .map(|h| h.trace.clone())
                .expect("reused trace comes from the hit list");
            let evidence = reuse_answers(&qs, &trace.answers);
            let verdict = self
                .agents
                .synthesize_verdict(p, scope, pair, &qs, &evidence, Provenance::Q2kReused)?;
            return Ok(Mapped {
                result: self.result(pair, verdict, qs, evidence.answers, true, scope),
                m,
                gate_judged: decision.judged,
                reused_trace_id: Some(id),
                inserted_trace_id: None,
                no_evidence: false,
            });
        }

        let evidence = match self.agents.answer_all(p, scope, &qs, pair) {
            Ok(ev) => ev,
            Err(AgentError::NoEvidenceFound(q)) => {
                ticket.leave();
                let verdict = MatchVerdict::unresolved(
                    format!("no web evidence found for question {q}"),
                    Provenance::Q2kFresh,
                );
                return Ok(Mapped {
                    result: self.result(pair, verdict, qs, vec![], false, scope),
                    m,
                    gate_judged: decision.judged,
                    reused_trace_id: None,
                    inserted_trace_id: None,
                    no_evidence: true,
                });
            }
            Err(e) => return Err(e.into()),
        };
        let verdict = self
            .agents
            .synthesize_verdict(p, scope, pair, &qs, &evidence, Provenance::Q2kFresh)?;
        let trace = self
            .store
            .insert_trace(p, scope, &qs, &evidence, ValidationStatus::Machine)?;
        ticket.leave();
        Ok(Mapped {
            result: self.result(pair, verdict, qs, evidence.answers, false, scope),
            m,
            gate_judged: decision.judged,
            reused_trace_id: None,
            inserted_trace_id: Some(trace.trace_id),
            no_evidence: false,
        })
    }

    /// Queue a result for review. Only low-confidence or unresolved results
    /// qualify.
    pub fn escalate(&self, result: MappingResult, no_evidence: bool) -> Result<ReviewItem, PipelineError> {
        let reason = if no_evidence {
            EscalationReason::NoEvidenceFound
        } else if result.verdict.confidence < self.cfg.theta {
            EscalationReason::LowConfidence
        } else {
            return Err(PipelineError::NotEscalatable(format!(
                "confidence {} is not below {}",
                result.verdict.confidence, self.cfg.theta
            )));
        };
        Ok(self.queue.push(result, reason, None)?)
    }

    /// Record a reviewer decision and feed it back into the trace store.
    pub fn apply_review(&self, item_id: u64, decision: ReviewDecision) -> Result<ReviewItem, PipelineError> {
        let mut failure: Option<PipelineError> = None;
        let out = self.queue.decide(item_id, &decision, |item| {
            self.feed_back(item, &decision).map_err(|e| {
                let msg = e.to_string();
                failure = Some(e);
                ReviewError::Rejected(msg)
            })
        });
        match (out, failure) {
            (_, Some(e)) => Err(e),
            (out, None) => Ok(out?),
        }
    }

    fn feed_back(&self, item: &ReviewItem, decision: &ReviewDecision) -> Result<(), PipelineError> {
        let underlying = item.trace_id.and_then(|id| self.store.get(id));
        match decision {
            ReviewDecision::Approve { .. } => {
                if let Some(t) = underlying {
                    self.store.insert_embedded(
                        &t.questions,
                        &t.answers,
                        ValidationStatus::HumanValidated,
                        t.embedding.clone(),
                    )?;
                }
            }
            ReviewDecision::Override {
                corrected_label,
                note,
            } => {
                let res = &item.result;
                if res.questions.is_empty() {
                    return Ok(());
                }
                let qs = QuestionSet::new(res.pair.pair_id(), res.questions.clone())?;
                let ans = corrected_answers(item, *corrected_label, note.as_deref());
                let key = concat_questions(&qs)?;
                let embedding = match underlying.filter(|t| t.concat_key == key) {
                    Some(t) => t.embedding.clone(),
                    None => self.providers.embed(&CallScope::for_pair(res.pair.pair_id()), &key)
                        .map_err(TraceError::from)?,
                };
                self.store
                    .insert_embedded(&qs, &ans, ValidationStatus::HumanValidated, embedding)?;
            }
        }
        Ok(())
    }

    pub fn run_batch(&self, pairs: &[ProductPair], mode: MappingMode, workers: usize) -> Result<BatchOutput, PipelineError> {
        self.run_batch_with(pairs, mode, workers, None, &|_| {})
    }

    /// Map every pair with a bounded worker pool. Each pair yields exactly one
    /// record; failures are recorded, never fatal. After `cancel` is raised no
    /// new pair starts and the remaining ones are recorded as cancelled.
    pub fn run_batch_with(
        &self,
        pairs: &[ProductPair],
        mode: MappingMode,
        workers: usize,
        cancel: Option<&AtomicBool>,
        on_record: &(dyn Fn(&RunRecord) + Sync),
    ) -> Result<BatchOutput, PipelineError> {
        if pairs.is_empty() {
            return Err(PipelineError::EmptyBatch);
        }
        let workers = workers.clamp(1, pairs.len());
        let turnstile = Turnstile::new();
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Slot>>> = Mutex::new(vec![None; pairs.len()]);

        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= pairs.len() {
                        break;
                    }
                    let ticket = Ticket {
                        gate: self.cfg.ordered_batches.then_some((&turnstile, i)),
                        done: !self.cfg.ordered_batches,
                    };
                    let (record, result) = if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                        drop(ticket);
                        (cancelled_record(i, &pairs[i], mode), None)
                    } else {
                        let (out, mut record) = self.run_one(i, &pairs[i], mode, ticket);
                        record.index = i;
                        (record, out.ok().map(|o| o.result))
                    };
                    self.counters.lock().expect("counter lock poisoned").add(&record);
                    on_record(&record);
                    slots.lock().expect("slot lock poisoned")[i] = Some((record, result));
                });
            }
        });

        let (records, results) = slots
            .into_inner()
            .expect("slot lock poisoned")
            .into_iter()
            .map(|s| s.expect("every slot filled"))
            .unzip();
        Ok(BatchOutput {
            log: RunLog { records },
            results,
        })
    }
}

fn cancelled_record(index: usize, pair: &ProductPair, mode: MappingMode) -> RunRecord {
    RunRecord {
        index,
        pair_id: pair.pair_id(),
        mode,
        m: 0,
        dedup_activated: false,
        web_queries_issued: 0,
        completion_calls: 0,
        embedding_calls: 0,
        gate_judged: false,
        verdict: None,
        confidence: None,
        provenance: None,
        reused_trace_id: None,
        inserted_trace_id: None,
        escalated: false,
        error: Some(PipelineError::Cancelled.to_string()),
    }
}

/// Stored answers re-addressed to the current questions, position by
/// position. Extra stored answers are dropped; missing ones stay missing.
pub fn reuse_answers(current: &QuestionSet, stored: &EvidenceSet) -> EvidenceSet {
    EvidenceSet {
        pair_id: current.pair_id,
        answers: current
            .questions
            .iter()
            .zip(&stored.answers)
            .map(|(q, a)| EvidenceAnswer {
                question_id: q.question_id.clone(),
                answer_text: a.answer_text.clone(),
                sources: a.sources.clone(),
                resolved_by: Resolution::ReusedTrace,
            })
            .collect(),
    }
}

/// Answers for an overridden item: the original answer (if any) followed by
/// the reviewer's correction, cited to the review item.
fn corrected_answers(item: &ReviewItem, label: MatchLabel, note: Option<&str>) -> EvidenceSet {
    let res = &item.result;
    let correction = match note {
        Some(n) if !n.trim().is_empty() => format!("Reviewer correction ({label}): {}", n.trim()),
        _ => format!("Reviewer correction: the pair is {label}."),
    };
    let review_source = Source {
        url: format!("review://item/{}", item.item_id),
        snippet: correction.clone(),
    };
    EvidenceSet {
        pair_id: res.pair.pair_id(),
        answers: res
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let prior = res.answers.get(i);
                let mut sources = prior.map(|a| a.sources.clone()).unwrap_or_default();
                sources.push(review_source.clone());
                EvidenceAnswer {
                    question_id: q.question_id.clone(),
                    answer_text: match prior {
                        Some(a) => format!("{} {correction}", a.answer_text),
                        None => correction.clone(),
                    },
                    sources,
                    resolved_by: Resolution::FreshSearch,
                }
            })
            .collect(),
    }
}
