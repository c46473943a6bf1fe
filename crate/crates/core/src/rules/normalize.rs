//! Title normalization: lowercasing, punctuation stripping, brand detection,
//! quantity extraction and stopword removal.

use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::config::{BrandDictionary, NormalizationConfig, QuantityKind};
use super::RuleError;

/// Exact non-negative decimal value.
pub type Exact = Ratio<u64>;

/// Parse `"12"`, `"0.5"`, `"1,5"` (decimal comma) or `"1,000"` (grouping).
pub fn parse_decimal(s: &str) -> Option<Exact> {
    let s = s.trim();
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
        return None;
    }
    let grouped = {
        let mut parts = s.split(',');
        let head = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        !rest.is_empty()
            && (1..=3).contains(&head.len())
            && head.chars().all(|c| c.is_ascii_digit())
            && rest.iter().all(|p| p.len() == 3 && p.chars().all(|c| c.is_ascii_digit()))
    };
    let plain = if grouped { s.replace(',', "") } else { s.replace(',', ".") };
    let (int, frac) = match plain.split_once('.') {
        Some((i, f)) => (i, f),
        None => (plain.as_str(), ""),
    };
    if int.is_empty() || frac.contains('.') {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: u64 = digits.parse().ok()?;
    let denom = 10u64.checked_pow(frac.len() as u32)?;
    Some(Ratio::new(numer, denom))
}

/// Render an exact value as a plain decimal (all shipped scales keep values
/// on terminating decimals).
pub fn format_decimal(v: &Exact) -> String {
    let Some(places) = (0..=18u32).find(|&p| 10u64.pow(p) % *v.denom() == 0) else {
        return format!("{}/{}", v.numer(), v.denom());
    };
    let scale = 10u64.pow(places);
    let Some(scaled) = v.numer().checked_mul(scale / *v.denom()) else {
        return format!("{}/{}", v.numer(), v.denom());
    };
    let (int, frac) = (scaled / scale, scaled % scale);
    if places == 0 || frac == 0 {
        return int.to_string();
    }
    let frac = format!("{frac:0width$}", width = places as usize);
    format!("{int}.{}", frac.trim_end_matches('0'))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuantitySpec {
    pub value: Exact,
    pub unit: String,
    pub kind: QuantityKind,
}

pub const MULTIPLIER_UNIT: &str = "x";
pub const COUNT_UNIT: &str = "ea";

impl QuantitySpec {
    pub fn new(value: Exact, unit: impl Into<String>, kind: QuantityKind) -> Self {
        Self {
            value,
            unit: unit.into(),
            kind,
        }
    }

    pub fn value_f64(&self) -> f64 {
        self.value.to_f64().unwrap_or(f64::NAN)
    }

    /// Text that normalizes back to this spec.
    pub fn reconstruct(&self) -> String {
        match self.kind {
            QuantityKind::Multiplier => format!("x {}", format_decimal(&self.value)),
            _ => format!("{} {}", format_decimal(&self.value), self.unit),
        }
    }
}

impl fmt::Display for QuantitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ({:?})", format_decimal(&self.value), self.unit, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedTitle {
    pub core_tokens: Vec<String>,
    pub brand: Option<String>,
    /// Sorted, so equal multisets compare equal.
    pub quantities: Vec<QuantitySpec>,
}

impl NormalizedTitle {
    /// Brand, core tokens and quantity strings joined back into a title.
    pub fn reconstruct(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(b) = &self.brand {
            parts.push(b.clone());
        }
        parts.extend(self.core_tokens.iter().cloned());
        parts.extend(self.quantities.iter().map(QuantitySpec::reconstruct));
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(String, Exact),
    Marker(String),
}

impl Tok {
    fn surface(&self) -> &str {
        match self {
            Tok::Word(s) | Tok::Number(s, _) | Tok::Marker(s) => s,
        }
    }
}

/// Split lowercased text into raw pieces. Separators are whitespace and any
/// non-alphanumeric symbol; symbol markers survive as their own piece, and a
/// `.`/`,` survives only between digits of a purely numeric run.
fn pieces(lower: &str, cfg: &NormalizationConfig) -> Vec<String> {
    let chars: Vec<char> = lower.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.push(c);
            continue;
        }
        let numeric_sep = (c == '.' || c == ',')
            && !cur.is_empty()
            && cur.chars().all(|d| d.is_ascii_digit() || d == '.' || d == ',')
            && cur.ends_with(|d: char| d.is_ascii_digit())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if numeric_sep {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if cfg.is_symbol_marker(c) {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_numeric(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

fn number_or_word(s: &str) -> Tok {
    match parse_decimal(s) {
        Some(v) => Tok::Number(s.to_string(), v),
        // unparseable digit runs lose their separators so no punctuation leaks
        None => Tok::Word(s.chars().filter(|c| c.is_alphanumeric()).collect()),
    }
}

fn word_or_marker(s: &str, cfg: &NormalizationConfig) -> Tok {
    if cfg.is_marker(s) {
        Tok::Marker(s.to_string())
    } else {
        Tok::Word(s.to_string())
    }
}

fn tokenize(raw: &str, cfg: &NormalizationConfig) -> Vec<Tok> {
    let lower = raw.to_lowercase();
    let mut toks = Vec::new();
    for p in pieces(&lower, cfg) {
        if p.chars().count() == 1 && cfg.is_symbol_marker(p.chars().next().unwrap_or(' ')) {
            toks.push(Tok::Marker(p));
            continue;
        }
        if is_numeric(&p) {
            toks.push(number_or_word(&p));
            continue;
        }
        // "500ml", "3x": leading number glued to a purely alphabetic suffix
        let split_at = p.find(|c: char| !(c.is_ascii_digit() || c == '.' || c == ','));
        if let Some(at) = split_at.filter(|&at| at > 0) {
            let (num, rest) = p.split_at(at);
            if rest.chars().all(char::is_alphabetic) {
                if let tok @ Tok::Number(..) = number_or_word(num) {
                    toks.push(tok);
                    toks.push(word_or_marker(rest, cfg));
                    continue;
                }
            }
        }
        // "x3": marker glued to a number
        if let Some(rest) = p.strip_prefix('x') {
            if cfg.is_marker("x") && is_numeric(rest) {
                if let tok @ Tok::Number(..) = number_or_word(rest) {
                    toks.push(Tok::Marker("x".into()));
                    toks.push(tok);
                    continue;
                }
            }
        }
        toks.push(word_or_marker(&p, cfg));
    }
    toks
}

/// Token surfaces as the normalizer sees them; used to key brand entries.
pub fn surface_tokens(text: &str, cfg: &NormalizationConfig) -> Vec<String> {
    tokenize(text, cfg)
        .into_iter()
        .map(|t| t.surface().to_string())
        .collect()
}

/// Run the three normalization steps over one raw title.
pub fn normalize_title(
    raw: &str,
    cfg: &NormalizationConfig,
    dict: &BrandDictionary,
) -> Result<NormalizedTitle, RuleError> {
    if raw.trim().is_empty() {
        return Err(RuleError::EmptyTitle);
    }
    let mut toks = tokenize(raw, cfg);

    let surfaces: Vec<String> = toks.iter().map(|t| t.surface().to_string()).collect();
    let brand = dict.find(&surfaces).map(|(start, len)| {
        toks.drain(start..start + len);
        surfaces[start..start + len].join(" ")
    });

    let mut quantities = Vec::new();
    let mut core = Vec::new();
    let mut used_marker = vec![false; toks.len()];
    let mut consumed = vec![false; toks.len()];
    for i in 0..toks.len() {
        if consumed[i] {
            continue;
        }
        let Tok::Number(surface, value) = &toks[i] else {
            continue;
        };
        consumed[i] = true;
        if value.is_zero() {
            core.push((i, surface.chars().filter(|c| c.is_alphanumeric()).collect()));
            continue;
        }
        if let Some(Tok::Word(w)) = toks.get(i + 1) {
            if let Some(unit) = cfg.unit(w) {
                consumed[i + 1] = true;
                quantities.push(QuantitySpec::new(
                    *value * unit.scale,
                    unit.canonical.clone(),
                    unit.kind,
                ));
                continue;
            }
        }
        let prev_marker = i > 0 && matches!(toks[i - 1], Tok::Marker(_)) && !consumed[i - 1];
        let next_marker = matches!(toks.get(i + 1), Some(Tok::Marker(_)));
        if prev_marker || next_marker {
            if prev_marker {
                used_marker[i - 1] = true;
            }
            if next_marker {
                used_marker[i + 1] = true;
            }
            quantities.push(QuantitySpec::new(*value, MULTIPLIER_UNIT, QuantityKind::Multiplier));
        } else {
            quantities.push(QuantitySpec::new(*value, COUNT_UNIT, QuantityKind::Count));
        }
    }
    for (i, t) in toks.iter().enumerate() {
        if consumed[i] {
            continue;
        }
        match t {
            Tok::Word(w) => core.push((i, w.clone())),
            Tok::Marker(m) if !used_marker[i] && m.chars().all(char::is_alphanumeric) => {
                core.push((i, m.clone()))
            }
            _ => {}
        }
    }
    core.sort_by_key(|(i, _)| *i);
    let core_tokens = core
        .into_iter()
        .map(|(_, w)| w)
        .filter(|w| !w.is_empty() && !cfg.stopwords().contains(w))
        .collect();
    quantities.sort();
    Ok(NormalizedTitle {
        core_tokens,
        brand,
        quantities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: u64, d: u64, unit: &str, kind: QuantityKind) -> QuantitySpec {
        QuantitySpec::new(Ratio::new(v, d), unit, kind)
    }

    fn words(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn decimals() {
        assert_eq!(parse_decimal("0.5"), Some(Ratio::new(1, 2)));
        assert_eq!(parse_decimal("1,5"), Some(Ratio::new(3, 2)));
        assert_eq!(parse_decimal("1,000"), Some(Ratio::from_integer(1000)));
        assert_eq!(parse_decimal("12,000,000"), Some(Ratio::from_integer(12_000_000)));
        assert_eq!(parse_decimal("1.2.3"), None);
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(format_decimal(&Ratio::new(1, 2)), "0.5");
        assert_eq!(format_decimal(&Ratio::new(1, 1000)), "0.001");
        assert_eq!(format_decimal(&Ratio::from_integer(4000)), "4000");
        assert_eq!(format_decimal(&Ratio::new(1, 3)), "1/3");
    }

    #[test]
    fn coke_zero() {
        let cfg = NormalizationConfig::default();
        let dict = BrandDictionary::new(["coke"], &cfg).unwrap();
        let n = normalize_title("Coke Zero 500ml", &cfg, &dict).unwrap();
        assert_eq!(n.core_tokens, words(&["zero"]));
        assert_eq!(n.brand.as_deref(), Some("coke"));
        assert_eq!(n.quantities, vec![q(500, 1, "ml", QuantityKind::Volume)]);
        let m = normalize_title("coke  zero 500 ML", &cfg, &dict).unwrap();
        assert_eq!(n, m);
    }

    #[test]
    fn table_one_base_title() {
        let cfg = NormalizationConfig::default();
        let n = normalize_title(
            "MegaDoseD Vitamin D3 4000IU, 120 tablets × 3 (12 months)",
            &cfg,
            &BrandDictionary::empty(),
        )
        .unwrap();
        assert_eq!(n.brand, None);
        assert_eq!(n.core_tokens, words(&["megadosed", "vitamin", "d3"]));
        let mut want = vec![
            q(4000, 1, "iu", QuantityKind::Dosage),
            q(120, 1, "ea", QuantityKind::Count),
            q(3, 1, "x", QuantityKind::Multiplier),
            q(12, 1, "month", QuantityKind::Duration),
        ];
        want.sort();
        assert_eq!(n.quantities, want);
    }

    #[test]
    fn unit_scaling_is_exact() {
        let cfg = NormalizationConfig::default();
        let d = BrandDictionary::empty();
        let a = normalize_title("Water 0.5l", &cfg, &d).unwrap();
        let b = normalize_title("Water 500 ml", &cfg, &d).unwrap();
        assert_eq!(a.quantities, b.quantities);
        let c = normalize_title("Water 1,5 L", &cfg, &d).unwrap();
        assert_eq!(c.quantities, vec![q(1500, 1, "ml", QuantityKind::Volume)]);
    }

    #[test]
    fn multiplier_forms() {
        let cfg = NormalizationConfig::default();
        let d = BrandDictionary::empty();
        for t in ["Juice 200ml x3", "Juice 3x 200ml", "Juice 200ml * 3", "juice 3 X 200 ML"] {
            let n = normalize_title(t, &cfg, &d).unwrap();
            assert_eq!(n.core_tokens, words(&["juice"]), "{t}");
            let mut want = vec![
                q(200, 1, "ml", QuantityKind::Volume),
                q(3, 1, "x", QuantityKind::Multiplier),
            ];
            want.sort();
            assert_eq!(n.quantities, want, "{t}");
        }
    }

    #[test]
    fn bare_numbers_and_stray_markers() {
        let cfg = NormalizationConfig::default();
        let d = BrandDictionary::empty();
        let n = normalize_title("Socks 5 X-Large", &cfg, &d).unwrap();
        // "5" sits next to the marker "x", so it is read as a multiplier
        assert_eq!(n.quantities, vec![q(5, 1, "x", QuantityKind::Multiplier)]);
        let n = normalize_title("Socks x-large, pack of 5", &cfg, &d).unwrap();
        assert_eq!(n.core_tokens, words(&["socks", "x", "large", "pack"]));
        assert_eq!(n.quantities, vec![q(5, 1, "ea", QuantityKind::Count)]);
        let n = normalize_title("Coke 0 sugar", &cfg, &d).unwrap();
        assert_eq!(n.core_tokens, words(&["coke", "0", "sugar"]));
        assert!(n.quantities.is_empty());
    }

    #[test]
    fn version_numbers_keep_no_punctuation() {
        let cfg = NormalizationConfig::default();
        let n = normalize_title("Router v2.0 (Gen.3)", &cfg, &BrandDictionary::empty()).unwrap();
        assert!(n
            .core_tokens
            .iter()
            .all(|t| t.chars().all(char::is_alphanumeric)));
    }

    #[test]
    fn brand_with_digits_and_stopwords() {
        let cfg = NormalizationConfig::default();
        let dict = BrandDictionary::new(["7up", "the body shop"], &cfg).unwrap();
        let n = normalize_title("7UP Lemon 355ml", &cfg, &dict).unwrap();
        assert_eq!(n.brand.as_deref(), Some("7 up"));
        assert_eq!(n.core_tokens, words(&["lemon"]));
        let n = normalize_title("The Body Shop Tea Tree Oil 10ml", &cfg, &dict).unwrap();
        assert_eq!(n.brand.as_deref(), Some("the body shop"));
    }

    #[test]
    fn empty_title() {
        let cfg = NormalizationConfig::default();
        assert!(matches!(
            normalize_title(" ", &cfg, &BrandDictionary::empty()),
            Err(RuleError::EmptyTitle)
        ));
    }

    #[test]
    fn reconstruct_is_fixed_point_on_table_title() {
        let cfg = NormalizationConfig::default();
        let dict = BrandDictionary::new(["korea eundan"], &cfg).unwrap();
        let n = normalize_title(
            "Korea Eundan MegaDoseD Vitamin D3 4000IU Swiss-made, 120 tablets × 3 (12 months)",
            &cfg,
            &dict,
        )
        .unwrap();
        let again = normalize_title(&n.reconstruct(), &cfg, &dict).unwrap();
        assert_eq!(n, again);
    }
}
