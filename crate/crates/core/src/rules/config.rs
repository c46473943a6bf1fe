use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::normalize::{parse_decimal, surface_tokens, Exact};
use super::RuleError;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const DEFAULT_UNITS: &str = include_str!("../../data/units.tsv");
const DEFAULT_BRANDS: &str = include_str!("../../data/brands.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Count,
    Mass,
    Volume,
    Length,
    Dosage,
    Multiplier,
    Duration,
}

impl FromStr for QuantityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "count" => QuantityKind::Count,
            "mass" => QuantityKind::Mass,
            "volume" => QuantityKind::Volume,
            "length" => QuantityKind::Length,
            "dosage" => QuantityKind::Dosage,
            "multiplier" => QuantityKind::Multiplier,
            "duration" => QuantityKind::Duration,
            other => return Err(format!("unknown quantity kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitEntry {
    pub canonical: String,
    pub kind: QuantityKind,
    /// Multiply a surface value by this to get the canonical value.
    pub scale: Exact,
}

/// Stage-one normalization settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationConfig {
    stopwords: BTreeSet<String>,
    units: BTreeMap<String, UnitEntry>,
    multiplier_markers: BTreeSet<String>,
}

impl NormalizationConfig {
    pub fn new(
        stopwords: impl IntoIterator<Item = String>,
        units: BTreeMap<String, UnitEntry>,
        multiplier_markers: impl IntoIterator<Item = String>,
    ) -> Result<Self, RuleError> {
        let stopwords = stopwords.into_iter().map(|s| s.to_lowercase()).collect();
        let multiplier_markers: BTreeSet<String> = multiplier_markers.into_iter().collect();
        if multiplier_markers.is_empty() {
            return Err(RuleError::Config("multiplier marker set is empty".into()));
        }
        for m in &multiplier_markers {
            let alnum = m.chars().all(char::is_alphanumeric);
            if m.is_empty() || (!alnum && m.chars().count() != 1) {
                return Err(RuleError::Config(format!(
                    "marker {m:?} must be a single symbol or an alphanumeric word"
                )));
            }
        }
        let mut checked = BTreeMap::new();
        for (surface, entry) in &units {
            if surface.chars().any(char::is_uppercase) {
                return Err(RuleError::Config(format!("unit key {surface:?} is not lowercase")));
            }
            if let Some((other, prev)) = units
                .iter()
                .find(|(_, e)| e.canonical == entry.canonical && e.kind != entry.kind)
            {
                return Err(RuleError::Config(format!(
                    "canonical unit {:?} used with kinds {:?} ({surface}) and {:?} ({other})",
                    entry.canonical, entry.kind, prev.kind
                )));
            }
            checked.insert(surface.clone(), entry.clone());
        }
        // canonical symbols must parse back to themselves
        for entry in units.values() {
            let key = entry.canonical.to_lowercase();
            checked.entry(key).or_insert_with(|| UnitEntry {
                canonical: entry.canonical.clone(),
                kind: entry.kind,
                scale: Exact::from_integer(1),
            });
        }
        Ok(Self {
            stopwords,
            units: checked,
            multiplier_markers,
        })
    }

    /// Parse the three text formats: one stopword per line, a tab-separated
    /// unit table (`surface canonical kind scale`), and optional markers.
    pub fn from_texts(
        stopwords: &str,
        units: &str,
        markers: Option<&str>,
    ) -> Result<Self, RuleError> {
        let stop = content_lines(stopwords).map(str::to_string).collect::<Vec<_>>();
        let mut table = BTreeMap::new();
        for (n, line) in units.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(RuleError::Config(format!(
                    "unit table line {}: expected 4 tab-separated columns",
                    n + 1
                )));
            }
            let kind = cols[2]
                .parse::<QuantityKind>()
                .map_err(|e| RuleError::Config(format!("unit table line {}: {e}", n + 1)))?;
            let scale = parse_decimal(cols[3]).ok_or_else(|| {
                RuleError::Config(format!("unit table line {}: bad scale {:?}", n + 1, cols[3]))
            })?;
            table.insert(
                cols[0].to_string(),
                UnitEntry {
                    canonical: cols[1].to_string(),
                    kind,
                    scale,
                },
            );
        }
        let markers: Vec<String> = match markers {
            Some(text) => content_lines(text).map(str::to_string).collect(),
            None => default_markers(),
        };
        Self::new(stop, table, markers)
    }

    pub fn load(
        stopwords: &Path,
        units: &Path,
        markers: Option<&Path>,
    ) -> Result<Self, RuleError> {
        let markers = markers.map(read).transpose()?;
        Self::from_texts(&read(stopwords)?, &read(units)?, markers.as_deref())
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn unit(&self, surface: &str) -> Option<&UnitEntry> {
        self.units.get(surface)
    }

    pub fn units(&self) -> &BTreeMap<String, UnitEntry> {
        &self.units
    }

    pub fn is_marker(&self, token: &str) -> bool {
        self.multiplier_markers.contains(token)
    }

    pub fn is_symbol_marker(&self, c: char) -> bool {
        !c.is_alphanumeric() && self.multiplier_markers.contains(c.encode_utf8(&mut [0; 4]) as &str)
    }
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self::from_texts(DEFAULT_STOPWORDS, DEFAULT_UNITS, None)
            .expect("shipped normalization tables are valid")
    }
}

fn default_markers() -> Vec<String> {
    ["×", "x", "*"].iter().map(|s| s.to_string()).collect()
}

/// Curated brand names, each stored as its normalized token sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BrandDictionary {
    entries: BTreeSet<Vec<String>>,
    longest: usize,
}

impl BrandDictionary {
    pub fn new<I, S>(brands: I, cfg: &NormalizationConfig) -> Result<Self, RuleError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries = BTreeSet::new();
        for b in brands {
            let toks = surface_tokens(b.as_ref(), cfg);
            if toks.is_empty() {
                return Err(RuleError::Config(format!(
                    "brand entry {:?} has no tokens",
                    b.as_ref()
                )));
            }
            entries.insert(toks);
        }
        let longest = entries.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { entries, longest })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_text(text: &str, cfg: &NormalizationConfig) -> Result<Self, RuleError> {
        Self::new(content_lines(text), cfg)
    }

    pub fn load(path: &Path, cfg: &NormalizationConfig) -> Result<Self, RuleError> {
        Self::from_text(&read(path)?, cfg)
    }

    /// The shipped starter dictionary.
    pub fn shipped(cfg: &NormalizationConfig) -> Self {
        Self::from_text(DEFAULT_BRANDS, cfg).expect("shipped brand list is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, tokens: &[String]) -> bool {
        self.entries.contains(tokens)
    }

    /// Leftmost position holding an entry, taking the longest entry there.
    pub fn find(&self, tokens: &[String]) -> Option<(usize, usize)> {
        for start in 0..tokens.len() {
            let max = self.longest.min(tokens.len() - start);
            for len in (1..=max).rev() {
                if self.entries.contains(&tokens[start..start + len]) {
                    return Some((start, len));
                }
            }
        }
        None
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String, RuleError> {
    fs::read_to_string(path).map_err(|e| RuleError::Io(format!("{}: {e}", path.display())))
}
