//! Deterministic heuristic matcher: normalize, align brands, align quantities,
//! then require everything to agree.

mod config;
mod normalize;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{
    DimensionStatus, MatchDimension, MatchLabel, MatchVerdict, ModelError, ProductPair,
    Provenance,
};

pub use config::{BrandDictionary, NormalizationConfig, QuantityKind, UnitEntry};
pub use normalize::{
    format_decimal, normalize_title, parse_decimal, surface_tokens, Exact, NormalizedTitle,
    QuantitySpec, COUNT_UNIT, MULTIPLIER_UNIT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("title is empty")]
    EmptyTitle,
    #[error("invalid normalization config: {0}")]
    Config(String),
    #[error("cannot read rule data: {0}")]
    Io(String),
}

impl From<ModelError> for RuleError {
    fn from(_: ModelError) -> Self {
        RuleError::EmptyTitle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrandOutcome {
    Match,
    Mismatch,
    Absent,
}

pub fn match_brand(a: &NormalizedTitle, b: &NormalizedTitle) -> BrandOutcome {
    match (&a.brand, &b.brand) {
        (Some(x), Some(y)) if x == y => BrandOutcome::Match,
        (Some(_), Some(_)) => BrandOutcome::Mismatch,
        _ => BrandOutcome::Absent,
    }
}

/// Quantity multisets equal after unit canonicalization.
pub fn align_quantities(a: &NormalizedTitle, b: &NormalizedTitle) -> bool {
    let mut x = a.quantities.clone();
    let mut y = b.quantities.clone();
    x.sort();
    y.sort();
    x == y
}

fn quantities_of<'a>(
    t: &'a NormalizedTitle,
    pred: impl Fn(QuantityKind) -> bool + 'a,
) -> Vec<&'a QuantitySpec> {
    let mut v: Vec<_> = t.quantities.iter().filter(|q| pred(q.kind)).collect();
    v.sort();
    v
}

fn status(ok: bool) -> DimensionStatus {
    if ok {
        DimensionStatus::Match
    } else {
        DimensionStatus::Mismatch
    }
}

/// Full three-stage rule: equivalent only when core token sets, detected brand
/// and extracted quantities all agree. A missing brand on either side is a
/// non-match.
pub fn rule_verdict(
    pair: &ProductPair,
    cfg: &NormalizationConfig,
    dict: &BrandDictionary,
) -> Result<MatchVerdict, RuleError> {
    let a = normalize_title(pair.base_title(), cfg, dict)?;
    let b = normalize_title(pair.compared_title(), cfg, dict)?;

    let core_a: BTreeSet<&String> = a.core_tokens.iter().collect();
    let core_b: BTreeSet<&String> = b.core_tokens.iter().collect();
    let core_ok = core_a == core_b;
    let brand = match_brand(&a, &b);
    let qty_ok = align_quantities(&a, &b);

    let is_pack = |k: QuantityKind| matches!(k, QuantityKind::Count | QuantityKind::Multiplier);
    let pack_ok = quantities_of(&a, is_pack) == quantities_of(&b, is_pack);
    let spec_ok = quantities_of(&a, |k| !is_pack(k)) == quantities_of(&b, |k| !is_pack(k));

    let mut dims = MatchVerdict::unknown_dimensions();
    dims.insert(
        MatchDimension::Brand,
        match brand {
            BrandOutcome::Match => DimensionStatus::Match,
            BrandOutcome::Mismatch => DimensionStatus::Mismatch,
            BrandOutcome::Absent => DimensionStatus::Unknown,
        },
    );
    dims.insert(MatchDimension::CoreProductName, status(core_ok));
    dims.insert(MatchDimension::Variant, status(core_ok));
    dims.insert(MatchDimension::Specification, status(spec_ok));
    dims.insert(MatchDimension::Quantity, status(pack_ok));

    let equivalent = core_ok && brand == BrandOutcome::Match && qty_ok;
    let mut reasons = Vec::new();
    match brand {
        BrandOutcome::Match => {}
        BrandOutcome::Mismatch => reasons.push(format!(
            "brands differ ({} vs {})",
            a.brand.as_deref().unwrap_or_default(),
            b.brand.as_deref().unwrap_or_default()
        )),
        BrandOutcome::Absent => reasons.push("brand not detected on both sides".to_string()),
    }
    if !core_ok {
        let only_a: Vec<&str> = core_a.difference(&core_b).map(|s| s.as_str()).collect();
        let only_b: Vec<&str> = core_b.difference(&core_a).map(|s| s.as_str()).collect();
        reasons.push(format!(
            "core tokens differ (base only: [{}], compared only: [{}])",
            only_a.join(", "),
            only_b.join(", ")
        ));
    }
    if !qty_ok {
        reasons.push("quantities do not align".to_string());
    }
    let rationale = if equivalent {
        "brand, core tokens and quantities all match".to_string()
    } else {
        reasons.join("; ")
    };

    Ok(MatchVerdict {
        label: if equivalent {
            MatchLabel::Equivalent
        } else {
            MatchLabel::NonEquivalent
        },
        dimension_status: dims,
        confidence: 1.0,
        rationale,
        provenance: Provenance::Rule,
    })
}
