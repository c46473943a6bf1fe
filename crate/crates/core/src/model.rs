//! Shared domain vocabulary: product pairs, questions, evidence and verdicts.
//!
//! All types are plain data, immutable once built, and serialize with the
//! field names used on disk and on the wire.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("title is empty")]
    EmptyTitle,
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("answer text is empty")]
    EmptyAnswer,
    #[error("fresh-search answer carries no sources")]
    MissingSources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairId(pub u64);

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pair-{}", self.0)
    }
}

/// Hands out run-unique pair ids. Dataset rows carry no identifier of their own.
#[derive(Debug, Default)]
pub struct PairIdGen {
    next: AtomicU64,
}

impl PairIdGen {
    pub fn new() -> Self {
        Self::starting_at(1)
    }

    pub fn starting_at(first: u64) -> Self {
        Self {
            next: AtomicU64::new(first),
        }
    }

    pub fn next_id(&self) -> PairId {
        PairId(self.next.fetch_add(1, Ordering::Relaxed))
    }

    /// Build a pair with a fresh id. Titles are kept verbatim.
    pub fn new_pair(&self, base: &str, compared: &str) -> Result<ProductPair, ModelError> {
        ProductPair::new(self.next_id(), base, compared)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct ProductPair {
    pair_id: PairId,
    base_title: String,
    compared_title: String,
}

#[derive(Deserialize)]
struct RawPair {
    pair_id: PairId,
    base_title: String,
    compared_title: String,
}

impl TryFrom<RawPair> for ProductPair {
    type Error = ModelError;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        ProductPair::new(raw.pair_id, &raw.base_title, &raw.compared_title)
    }
}

impl ProductPair {
    pub fn new(pair_id: PairId, base: &str, compared: &str) -> Result<Self, ModelError> {
        if base.trim().is_empty() || compared.trim().is_empty() {
            return Err(ModelError::EmptyTitle);
        }
        Ok(Self {
            pair_id,
            base_title: base.to_string(),
            compared_title: compared.to_string(),
        })
    }

    pub fn pair_id(&self) -> PairId {
        self.pair_id
    }

    pub fn base_title(&self) -> &str {
        &self.base_title
    }

    pub fn compared_title(&self) -> &str {
        &self.compared_title
    }

    /// Same titles with the sides swapped.
    pub fn swapped(&self) -> Self {
        Self {
            pair_id: self.pair_id,
            base_title: self.compared_title.clone(),
            compared_title: self.base_title.clone(),
        }
    }
}

/// The five attribute dimensions every disambiguation question belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchDimension {
    Brand,
    CoreProductName,
    Variant,
    Specification,
    Quantity,
}

impl MatchDimension {
    pub const ALL: [MatchDimension; 5] = [
        MatchDimension::Brand,
        MatchDimension::CoreProductName,
        MatchDimension::Variant,
        MatchDimension::Specification,
        MatchDimension::Quantity,
    ];

    /// Token used in the structured output grammar.
    pub fn token(self) -> &'static str {
        match self {
            MatchDimension::Brand => "brand",
            MatchDimension::CoreProductName => "core_product_name",
            MatchDimension::Variant => "variant",
            MatchDimension::Specification => "specification",
            MatchDimension::Quantity => "quantity",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.token() == token)
    }

    pub fn label(self) -> &'static str {
        match self {
            MatchDimension::Brand => "Brand",
            MatchDimension::CoreProductName => "Core Product Name",
            MatchDimension::Variant => "Variant",
            MatchDimension::Specification => "Specification",
            MatchDimension::Quantity => "Quantity",
        }
    }

    /// What a question on this dimension is meant to settle.
    pub fn guidance(self) -> &'static str {
        match self {
            MatchDimension::Brand => {
                "whether both listings come from the same manufacturer or label"
            }
            MatchDimension::CoreProductName => {
                "whether the product names are aliases of one line or name different lines"
            }
            MatchDimension::Variant => "whether flavor, color, scent or finish options agree",
            MatchDimension::Specification => {
                "whether size, weight, volume, strength or other technical values agree"
            }
            MatchDimension::Quantity => {
                "whether pack size, unit count and bundle multiplier agree"
            }
        }
    }
}

impl fmt::Display for MatchDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambiguationQuestion {
    pub question_id: String,
    pub pair_id: PairId,
    pub text: String,
    pub dimension: MatchDimension,
}

impl DisambiguationQuestion {
    pub fn new(
        pair_id: PairId,
        index: usize,
        text: &str,
        dimension: MatchDimension,
    ) -> Result<Self, ModelError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        Ok(Self {
            question_id: format!("{pair_id}-q{}", index + 1),
            pair_id,
            text: text.to_string(),
            dimension,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub url: String,
    pub snippet: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    FreshSearch,
    ReusedTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceAnswer {
    pub question_id: String,
    pub answer_text: String,
    pub sources: Vec<Source>,
    pub resolved_by: Resolution,
}

impl EvidenceAnswer {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.answer_text.trim().is_empty() {
            return Err(ModelError::EmptyAnswer);
        }
        if self.resolved_by == Resolution::FreshSearch && self.sources.is_empty() {
            return Err(ModelError::MissingSources);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchLabel {
    Equivalent,
    NonEquivalent,
}

impl MatchLabel {
    /// 1 = equivalent, matching dataset labels.
    pub fn as_bit(self) -> u8 {
        match self {
            MatchLabel::Equivalent => 1,
            MatchLabel::NonEquivalent => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            1 => Some(MatchLabel::Equivalent),
            0 => Some(MatchLabel::NonEquivalent),
            _ => None,
        }
    }
}

impl fmt::Display for MatchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchLabel::Equivalent => "Equivalent",
            MatchLabel::NonEquivalent => "NonEquivalent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimensionStatus {
    Match,
    Mismatch,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Rule,
    ZeroShot,
    FewShot,
    WebSearch,
    Q2kFresh,
    Q2kReused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub label: MatchLabel,
    pub dimension_status: BTreeMap<MatchDimension, DimensionStatus>,
    pub confidence: f64,
    pub rationale: String,
    pub provenance: Provenance,
}

impl MatchVerdict {
    /// Status map with every dimension set to `Unknown`.
    pub fn unknown_dimensions() -> BTreeMap<MatchDimension, DimensionStatus> {
        MatchDimension::ALL
            .into_iter()
            .map(|d| (d, DimensionStatus::Unknown))
            .collect()
    }

    /// Placeholder verdict for a pair the engine could not resolve.
    pub fn unresolved(rationale: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            label: MatchLabel::NonEquivalent,
            dimension_status: Self::unknown_dimensions(),
            confidence: 0.0,
            rationale: rationale.into(),
            provenance,
        }
    }
}

/// True iff confidence is in `[0, 1]` and every dimension has a status.
pub fn validate_verdict(v: &MatchVerdict) -> bool {
    (0.0..=1.0).contains(&v.confidence)
        && MatchDimension::ALL
            .iter()
            .all(|d| v.dimension_status.contains_key(d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub pair: ProductPair,
    pub verdict: MatchVerdict,
    pub questions: Vec<DisambiguationQuestion>,
    pub answers: Vec<EvidenceAnswer>,
    pub dedup_activated: bool,
    pub web_queries_issued: u32,
    pub wall_time_ms: u64,
}

impl MappingResult {
    pub fn is_consistent(&self) -> bool {
        validate_verdict(&self.verdict)
            && self.answers.len() <= self.questions.len()
            && (self.verdict.provenance != Provenance::Q2kReused || self.dedup_activated)
    }
}
