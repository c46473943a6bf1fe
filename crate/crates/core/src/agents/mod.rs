//! LLM-backed reasoning roles: question generation, evidence synthesis,
//! verdict synthesis, the reuse sufficiency judge, and the three single-call
//! baselines. Each role is a prompt plus a strict parser of the reply.

pub mod grammar;
pub mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    DimensionStatus, DisambiguationQuestion, EvidenceAnswer, MatchDimension, MatchLabel,
    MatchVerdict, ModelError, PairId, ProductPair, Provenance, Resolution, Source,
};
use crate::provider::{CallScope, CompletionRequest, ProviderError, Providers, SearchResult};
use grammar::Record;
pub use prompts::{PromptSet, Template};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("malformed provider output: {0}")]
    MalformedProviderOutput(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no evidence found for question {0}")]
    NoEvidenceFound(String),
    #[error("evidence does not line up with questions: {0}")]
    Misaligned(String),
    #[error("prompt template error: {0}")]
    Template(String),
}

fn malformed(msg: impl Into<String>) -> AgentError {
    AgentError::MalformedProviderOutput(msg.into())
}

pub const TAG_QUESTIONS: &str = "questions";
pub const TAG_ANSWER: &str = "answer";
pub const TAG_VERDICT: &str = "verdict";
pub const TAG_SUFFICIENCY: &str = "sufficiency";
pub const TAG_ZERO_SHOT: &str = "zero_shot";
pub const TAG_FEW_SHOT: &str = "few_shot";
pub const TAG_WEB_SEARCH: &str = "web_search";

/// The questions generated for one pair (possibly none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub pair_id: PairId,
    pub questions: Vec<DisambiguationQuestion>,
}

impl QuestionSet {
    pub fn new(pair_id: PairId, questions: Vec<DisambiguationQuestion>) -> Result<Self, AgentError> {
        if let Some(q) = questions.iter().find(|q| q.pair_id != pair_id) {
            return Err(AgentError::Misaligned(format!(
                "question {} belongs to {}, not {pair_id}",
                q.question_id, q.pair_id
            )));
        }
        Ok(Self { pair_id, questions })
    }

    /// Build from `(dimension, text)` pairs, numbering questions from 1.
    pub fn from_texts<'a>(
        pair_id: PairId,
        items: impl IntoIterator<Item = (MatchDimension, &'a str)>,
    ) -> Result<Self, ModelError> {
        let questions = items
            .into_iter()
            .enumerate()
            .map(|(i, (d, t))| DisambiguationQuestion::new(pair_id, i, t, d))
            .collect::<Result<_, _>>()?;
        Ok(Self { pair_id, questions })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.questions.iter().map(|q| q.text.as_str()).collect()
    }
}

/// Answers aligned one-to-one with a [`QuestionSet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub pair_id: PairId,
    pub answers: Vec<EvidenceAnswer>,
}

impl EvidenceSet {
    pub fn empty(pair_id: PairId) -> Self {
        Self {
            pair_id,
            answers: Vec::new(),
        }
    }

    pub fn is_aligned_with(&self, qs: &QuestionSet) -> bool {
        self.answers.len() == qs.len()
    }
}

/// A labeled pair shown to the few-shot baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub base_product: String,
    pub compared_product: String,
    pub label: MatchLabel,
}

#[derive(Debug, Clone)]
pub struct Agents {
    prompts: PromptSet,
    /// Results requested per knowledge-agent search.
    pub max_search_results: usize,
    /// Answer the questions of one pair concurrently.
    pub parallel_answers: bool,
}

impl Default for Agents {
    fn default() -> Self {
        Self::new(PromptSet::shipped())
    }
}

fn dimension_block() -> String {
    MatchDimension::ALL
        .iter()
        .map(|d| format!("- {} ({}): {}", d.token(), d.label(), d.guidance()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn dimension_tokens() -> String {
    MatchDimension::ALL
        .iter()
        .map(|d| d.token())
        .collect::<Vec<_>>()
        .join(", ")
}

fn format_sources(results: &[SearchResult]) -> String {
    if results.is_empty() {
        return "(none)".to_string();
    }
    results
        .iter()
        .map(|r| format!("[{}] {} <{}>\n{}", r.rank, r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Numbered question/answer listing used in verdict and judge prompts.
pub fn format_evidence(questions: &[DisambiguationQuestion], answers: &[EvidenceAnswer]) -> String {
    if questions.is_empty() {
        return "(none)".to_string();
    }
    questions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let a = answers
                .get(i)
                .map(|a| a.answer_text.as_str())
                .unwrap_or("(unanswered)");
            format!("Q{} [{}]: {}\nA{}: {}", i + 1, q.dimension, q.text, i + 1, a)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_questions(questions: &[DisambiguationQuestion]) -> String {
    if questions.is_empty() {
        return "(none)".to_string();
    }
    questions
        .iter()
        .enumerate()
        .map(|(i, q)| format!("Q{} [{}]: {}", i + 1, q.dimension, q.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_exemplars(exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let label = match e.label {
                MatchLabel::Equivalent => "equivalent",
                MatchLabel::NonEquivalent => "non_equivalent",
            };
            format!(
                "Example {}: \"{}\" vs \"{}\" => {label}",
                i + 1,
                e.base_product,
                e.compared_product
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Search query for one question: question text followed by both titles.
pub fn question_query(q: &DisambiguationQuestion, pair: &ProductPair) -> String {
    format!("{} {} {}", q.text, pair.base_title(), pair.compared_title())
}

/// Unstructured query used by the web-search baseline.
pub fn pair_query(pair: &ProductPair) -> String {
    format!("{} {}", pair.base_title(), pair.compared_title())
}

pub fn parse_questions(reply: &str, pair_id: PairId) -> Result<QuestionSet, AgentError> {
    let rec = Record::parse(reply).map_err(malformed)?;
    let count: usize = rec
        .get("count")
        .map_err(malformed)?
        .parse()
        .map_err(|_| malformed("count is not a non-negative integer"))?;
    let mut allowed = vec!["count".to_string()];
    let mut items = Vec::with_capacity(count);
    for i in 1..=count {
        let dk = format!("q{i}.dimension");
        let tk = format!("q{i}.text");
        let token = rec.get(&dk).map_err(malformed)?;
        let dim = MatchDimension::from_token(token)
            .ok_or_else(|| malformed(format!("{dk}: unknown dimension {token:?}")))?;
        items.push((dim, rec.get(&tk).map_err(malformed)?));
        allowed.push(dk);
        allowed.push(tk);
    }
    rec.only(&allowed).map_err(malformed)?;
    QuestionSet::from_texts(pair_id, items).map_err(|e| malformed(e.to_string()))
}

pub fn parse_answer(reply: &str) -> Result<String, AgentError> {
    let rec = Record::parse(reply).map_err(malformed)?;
    rec.only(&["answer".to_string()]).map_err(malformed)?;
    Ok(rec.get("answer").map_err(malformed)?.to_string())
}

pub fn parse_verdict(reply: &str, provenance: Provenance) -> Result<MatchVerdict, AgentError> {
    let rec = Record::parse(reply).map_err(malformed)?;
    let mut allowed: Vec<String> = ["label", "confidence", "rationale"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let label = match rec.get("label").map_err(malformed)? {
        "equivalent" => MatchLabel::Equivalent,
        "non_equivalent" => MatchLabel::NonEquivalent,
        other => return Err(malformed(format!("label: unknown value {other:?}"))),
    };
    let mut dims = std::collections::BTreeMap::new();
    for d in MatchDimension::ALL {
        let status = match rec.get(d.token()).map_err(malformed)? {
            "match" => DimensionStatus::Match,
            "mismatch" => DimensionStatus::Mismatch,
            "unknown" => DimensionStatus::Unknown,
            other => return Err(malformed(format!("{}: unknown status {other:?}", d.token()))),
        };
        dims.insert(d, status);
        allowed.push(d.token().to_string());
    }
    let raw = rec.get("confidence").map_err(malformed)?;
    let confidence: f64 = raw
        .parse()
        .map_err(|_| malformed(format!("confidence {raw:?} is not a number")))?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(malformed(format!("confidence {confidence} outside [0, 1]")));
    }
    rec.only(&allowed).map_err(malformed)?;
    Ok(MatchVerdict {
        label,
        dimension_status: dims,
        confidence,
        rationale: rec.get("rationale").map_err(malformed)?.to_string(),
        provenance,
    })
}

pub fn parse_sufficiency(reply: &str) -> Result<(bool, String), AgentError> {
    let rec = Record::parse(reply).map_err(malformed)?;
    rec.only(&["sufficient".to_string(), "reason".to_string()])
        .map_err(malformed)?;
    let ok = match rec.get("sufficient").map_err(malformed)? {
        "yes" => true,
        "no" => false,
        other => return Err(malformed(format!("sufficient: expected yes/no, got {other:?}"))),
    };
    Ok((ok, rec.get("reason").map_err(malformed)?.to_string()))
}

impl Agents {
    pub fn new(prompts: PromptSet) -> Self {
        Self {
            prompts,
            max_search_results: 5,
            parallel_answers: true,
        }
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    fn request(
        &self,
        template: &Template,
        tag: &str,
        vars: &[(&str, &str)],
    ) -> Result<CompletionRequest, AgentError> {
        let (system, user) = template.render(vars).map_err(AgentError::Template)?;
        Ok(CompletionRequest::new(system, user, tag))
    }

    pub fn questions_request(&self, pair: &ProductPair) -> Result<CompletionRequest, AgentError> {
        let dims = dimension_block();
        let tokens = dimension_tokens();
        self.request(
            &self.prompts.questions,
            TAG_QUESTIONS,
            &[
                ("dimensions", &dims),
                ("dimension_tokens", &tokens),
                ("base", pair.base_title()),
                ("compared", pair.compared_title()),
            ],
        )
    }

    /// Decompose a pair into dimension-tagged questions. Zero questions is a
    /// valid outcome.
    pub fn generate_questions(
        &self,
        providers: &Providers,
        scope: &CallScope,
        pair: &ProductPair,
    ) -> Result<QuestionSet, AgentError> {
        let req = self.questions_request(pair)?;
        let reply = providers.complete(scope, &req)?;
        parse_questions(&reply, pair.pair_id())
    }

    /// One focused search, then one synthesis call.
    pub fn answer_question(
        &self,
        providers: &Providers,
        scope: &CallScope,
        q: &DisambiguationQuestion,
        pair: &ProductPair,
    ) -> Result<EvidenceAnswer, AgentError> {
        let hits = providers.search(scope, &question_query(q, pair), self.max_search_results)?;
        if hits.is_empty() {
            return Err(AgentError::NoEvidenceFound(q.question_id.clone()));
        }
        let sources = format_sources(&hits);
        let req = self.request(
            &self.prompts.answer,
            TAG_ANSWER,
            &[
                ("question", &q.text),
                ("dimension", q.dimension.token()),
                ("base", pair.base_title()),
                ("compared", pair.compared_title()),
                ("sources", &sources),
            ],
        )?;
        let reply = providers.complete(scope, &req)?;
        let answer = EvidenceAnswer {
            question_id: q.question_id.clone(),
            answer_text: parse_answer(&reply)?,
            sources: hits
                .into_iter()
                .map(|h| Source {
                    url: h.url,
                    snippet: h.snippet,
                })
                .collect(),
            resolved_by: Resolution::FreshSearch,
        };
        answer.validate().map_err(|e| malformed(e.to_string()))?;
        Ok(answer)
    }

    /// Answer every question; output order follows question order.
    pub fn answer_all(
        &self,
        providers: &Providers,
        scope: &CallScope,
        qs: &QuestionSet,
        pair: &ProductPair,
    ) -> Result<EvidenceSet, AgentError> {
        let answers = if self.parallel_answers && qs.len() > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = qs
                    .questions
                    .iter()
                    .map(|q| s.spawn(move || self.answer_question(providers, scope, q, pair)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("answer worker panicked"))
                    .collect::<Result<Vec<_>, _>>()
            })?
        } else {
            qs.questions
                .iter()
                .map(|q| self.answer_question(providers, scope, q, pair))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(EvidenceSet {
            pair_id: pair.pair_id(),
            answers,
        })
    }

    pub fn verdict_request(
        &self,
        pair: &ProductPair,
        questions: &[DisambiguationQuestion],
        answers: &[EvidenceAnswer],
    ) -> Result<CompletionRequest, AgentError> {
        let evidence = format_evidence(questions, answers);
        self.request(
            &self.prompts.verdict,
            TAG_VERDICT,
            &[
                ("base", pair.base_title()),
                ("compared", pair.compared_title()),
                ("evidence", &evidence),
            ],
        )
    }

    /// One completion turning the evidence into a structured verdict.
    pub fn synthesize_verdict(
        &self,
        providers: &Providers,
        scope: &CallScope,
        pair: &ProductPair,
        questions: &QuestionSet,
        evidence: &EvidenceSet,
        provenance: Provenance,
    ) -> Result<MatchVerdict, AgentError> {
        if evidence.answers.len() > questions.len() {
            return Err(AgentError::Misaligned(format!(
                "{} answers for {} questions",
                evidence.answers.len(),
                questions.len()
            )));
        }
        let req = self.verdict_request(pair, &questions.questions, &evidence.answers)?;
        let reply = providers.complete(scope, &req)?;
        parse_verdict(&reply, provenance)
    }

    /// Ask whether stored answers settle the current questions.
    pub fn judge_sufficiency(
        &self,
        providers: &Providers,
        scope: &CallScope,
        pair: &ProductPair,
        current: &QuestionSet,
        stored_questions: &QuestionSet,
        stored_answers: &EvidenceSet,
    ) -> Result<(bool, String), AgentError> {
        let questions = format_questions(&current.questions);
        let stored_q = format_questions(&stored_questions.questions);
        let stored_a = format_evidence(&stored_questions.questions, &stored_answers.answers);
        let req = self.request(
            &self.prompts.sufficiency,
            TAG_SUFFICIENCY,
            &[
                ("base", pair.base_title()),
                ("compared", pair.compared_title()),
                ("questions", &questions),
                ("stored_questions", &stored_q),
                ("stored_answers", &stored_a),
            ],
        )?;
        let reply = providers.complete(scope, &req)?;
        parse_sufficiency(&reply)
    }

    pub fn zero_shot(
        &self,
        providers: &Providers,
        scope: &CallScope,
        pair: &ProductPair,
    ) -> Result<MatchVerdict, AgentError> {
        let req = self.request(
            &self.prompts.zero_shot,
            TAG_ZERO_SHOT,
            &[("base", pair.base_title()), ("compared", pair.compared_title())],
        )?;
        parse_verdict(&providers.complete(scope, &req)?, Provenance::ZeroShot)
    }

    pub fn few_shot(
        &self,
        providers: &Providers,
        scope: &CallScope,
        pair: &ProductPair,
        exemplars: &[Exemplar],
    ) -> Result<MatchVerdict, AgentError> {
        let ex = format_exemplars(exemplars);
        let req = self.request(
            &self.prompts.few_shot,
            TAG_FEW_SHOT,
            &[
                ("exemplars", &ex),
                ("base", pair.base_title()),
                ("compared", pair.compared_title()),
            ],
        )?;
        parse_verdict(&providers.complete(scope, &req)?, Provenance::FewShot)
    }

    /// One search over the concatenated titles, then one completion. Returns
    /// the verdict and the results that were shown.
    pub fn web_search(
        &self,
        providers: &Providers,
        scope: &CallScope,
        pair: &ProductPair,
    ) -> Result<(MatchVerdict, Vec<SearchResult>), AgentError> {
        let hits = providers.search(scope, &pair_query(pair), self.max_search_results)?;
        let sources = format_sources(&hits);
        let req = self.request(
            &self.prompts.web_search,
            TAG_WEB_SEARCH,
            &[
                ("base", pair.base_title()),
                ("compared", pair.compared_title()),
                ("sources", &sources),
            ],
        )?;
        let verdict = parse_verdict(&providers.complete(scope, &req)?, Provenance::WebSearch)?;
        Ok((verdict, hits))
    }
}
