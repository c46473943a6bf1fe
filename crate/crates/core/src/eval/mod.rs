//! Dataset ingestion, accuracy, ablation statistics and report files.

pub mod synth;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Exemplar;
use crate::model::{MappingResult, MatchLabel, ModelError, PairIdGen, ProductPair};
use crate::pipeline::{MappingMode, RunLog};

pub const COLUMNS: [&str; 3] = ["base_product", "compared_product", "label"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("row {row}: label must be 0 or 1, got {value:?}")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: empty title")]
    EmptyTitle { row: usize },
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("cannot read {0}")]
    FileUnreadable(String),
    #[error("cannot write {0}")]
    FileUnwritable(String),
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no input")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub base_product: String,
    pub compared_product: String,
    /// 1 = equivalent.
    pub label: u8,
}

impl DatasetRecord {
    pub fn match_label(&self) -> MatchLabel {
        MatchLabel::from_bit(self.label).expect("label validated on load")
    }

    pub fn to_pair(&self, ids: &PairIdGen) -> Result<ProductPair, ModelError> {
        ids.new_pair(&self.base_product, &self.compared_product)
    }

    pub fn to_exemplar(&self) -> Exemplar {
        Exemplar {
            base_product: self.base_product.clone(),
            compared_product: self.compared_product.clone(),
            label: self.match_label(),
        }
    }
}

/// Parse tab-separated text with a header naming the three columns (any
/// order, extra columns ignored). Rows are numbered from 1, header excluded.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::BadRow {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| EvalError::MissingColumn(name.to_string()))
    };
    let (ib, ic, il) = (col(COLUMNS[0])?, col(COLUMNS[1])?, col(COLUMNS[2])?);

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| EvalError::BadRow {
            row,
            reason: e.to_string(),
        })?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let (base, compared) = (field(ib), field(ic));
        if base.trim().is_empty() || compared.trim().is_empty() {
            return Err(EvalError::EmptyTitle { row });
        }
        let label = match field(il).trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(EvalError::BadLabel {
                    row,
                    value: other.to_string(),
                })
            }
        };
        out.push(DatasetRecord {
            base_product: base.to_string(),
            compared_product: compared.to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::FileUnreadable(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

pub fn render_dataset(records: &[DatasetRecord]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for r in records {
        out.push_str(&format!("{}\t{}\t{}\n", r.base_product, r.compared_product, r.label));
    }
    out
}

pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), EvalError> {
    write_file(path, &render_dataset(records))
}

fn write_file(path: &Path, body: &str) -> Result<(), EvalError> {
    let unwritable = |e: io::Error| EvalError::FileUnwritable(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(unwritable)?;
    }
    fs::write(path, body).map_err(unwritable)
}

/// Shipped few-shot exemplars (eight labeled pairs).
pub fn shipped_exemplars() -> Vec<Exemplar> {
    parse_dataset(include_str!("../../data/exemplars.tsv"))
        .expect("shipped exemplars parse")
        .iter()
        .map(DatasetRecord::to_exemplar)
        .collect()
}

/// Fraction of positions where prediction equals label, exactly.
pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<Ratio<u64>, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count() as u64;
    Ok(Ratio::new(correct, preds.len() as u64))
}

/// Round half up to `places` decimals using integer arithmetic only.
pub fn format_ratio(r: &Ratio<u64>, places: u32) -> String {
    let scale = 10u128.pow(places);
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    let scaled = (n * scale * 2 + d) / (2 * d);
    let (int, frac) = (scaled / scale, scaled % scale);
    if places == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac:0width$}", width = places as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationStats {
    pub records: u64,
    pub questions: u64,
    pub dedup_activated: u64,
    pub web_queries: u64,
    pub completion_calls: u64,
    pub failures: u64,
}

impl AblationStats {
    pub fn avg_questions_per_pair(&self) -> Ratio<u64> {
        Ratio::new(self.questions, self.records)
    }

    pub fn dedup_activation_rate(&self) -> Ratio<u64> {
        Ratio::new(self.dedup_activated, self.records)
    }
}

pub fn ablation_stats(log: &RunLog) -> Result<AblationStats, EvalError> {
    if log.records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let r = &log.records;
    Ok(AblationStats {
        records: r.len() as u64,
        questions: r.iter().map(|x| x.m as u64).sum(),
        dedup_activated: r.iter().filter(|x| x.dedup_activated).count() as u64,
        web_queries: r.iter().map(|x| x.web_queries_issued as u64).sum(),
        completion_calls: r.iter().map(|x| x.completion_calls as u64).sum(),
        failures: r.iter().filter(|x| x.failed()).count() as u64,
    })
}

fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: MappingMode,
    pub method: String,
    pub n_pairs: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub total_questions: u64,
    pub avg_questions_per_pair: f64,
    pub dedup_activated: u64,
    pub dedup_activation_rate: f64,
    pub total_web_queries: u64,
    pub total_completion_calls: u64,
    pub failures: u64,
}

impl EvalReport {
    pub fn accuracy_exact(&self) -> Ratio<u64> {
        Ratio::new(self.correct, self.n_pairs)
    }

    pub fn table_row(&self) -> String {
        format!("{} | {}", self.method, format_ratio(&self.accuracy_exact(), 4))
    }
}

/// Score a batch against its dataset. A pair that failed has no prediction
/// and counts as incorrect.
pub fn evaluate(
    mode: MappingMode,
    dataset: &[DatasetRecord],
    results: &[Option<MappingResult>],
    log: &RunLog,
) -> Result<EvalReport, EvalError> {
    if results.len() != dataset.len() {
        return Err(EvalError::LengthMismatch {
            preds: results.len(),
            labels: dataset.len(),
        });
    }
    let labels: Vec<u8> = dataset.iter().map(|d| d.label).collect();
    let preds: Vec<u8> = results
        .iter()
        .zip(&labels)
        .map(|(r, l)| match r {
            Some(r) => r.verdict.label.as_bit(),
            None => 1 - l,
        })
        .collect();
    let acc = accuracy(&preds, &labels)?;
    let correct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as u64;
    let stats = ablation_stats(log)?;
    Ok(EvalReport {
        mode,
        method: mode.method_name().to_string(),
        n_pairs: dataset.len() as u64,
        correct,
        accuracy: to_f64(acc),
        total_questions: stats.questions,
        avg_questions_per_pair: to_f64(stats.avg_questions_per_pair()),
        dedup_activated: stats.dedup_activated,
        dedup_activation_rate: to_f64(stats.dedup_activation_rate()),
        total_web_queries: stats.web_queries,
        total_completion_calls: stats.completion_calls,
        failures: stats.failures,
    })
}

/// Table with one `method | accuracy` row per report, then the ablation
/// figures of each report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("Method | Accuracy\n");
    for r in reports {
        out.push_str(&r.table_row());
        out.push('\n');
    }
    for r in reports {
        out.push_str(&format!(
            "\n[{}]\npairs: {}\ncorrect: {}\navg questions per pair: {}\ndedup activation rate: {}\nweb queries: {}\ncompletion calls: {}\nfailures: {}\n",
            r.mode,
            r.n_pairs,
            r.correct,
            format_ratio(&Ratio::new(r.total_questions, r.n_pairs), 4),
            format_ratio(&Ratio::new(r.dedup_activated, r.n_pairs), 4),
            r.total_web_queries,
            r.total_completion_calls,
            r.failures,
        ));
    }
    out
}

/// `reports/q2k.report.txt` keeps its records in `reports/q2k.report.jsonl`.
pub fn record_path(out: &Path) -> PathBuf {
    out.with_extension("jsonl")
}

/// Write the table to `out` and one JSON record per report next to it.
pub fn emit_reports(reports: &[EvalReport], out: &Path) -> Result<(), EvalError> {
    write_file(out, &render_table(reports))?;
    let records: String = reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect();
    write_file(&record_path(out), &records)
}

pub fn emit_report(report: &EvalReport, out: &Path) -> Result<(), EvalError> {
    emit_reports(std::slice::from_ref(report), out)
}
