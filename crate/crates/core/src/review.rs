//! Queue of low-confidence results awaiting a human decision.
//!
//! The queue is persisted as JSON lines, one item per line, rewritten through
//! a temporary file on every change so a crash leaves either the old or the
//! new snapshot.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, Timestamp};
use crate::model::{MappingResult, MatchLabel};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("review item {0} not found")]
    NotFound(u64),
    #[error("review item {0} was already decided")]
    AlreadyDecided(u64),
    #[error("override requires a corrected label")]
    MissingLabel,
    #[error("persistence failure: {0}")]
    Persistence(String),
    #[error("{0}")]
    Rejected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Overridden,
}

impl FromStr for ReviewStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Self::Pending),
            "approved" => Ok(Self::Approved),
            "overridden" => Ok(Self::Overridden),
            other => Err(format!("unknown review status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationReason {
    LowConfidence,
    NoEvidenceFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: u64,
    pub result: MappingResult,
    pub status: ReviewStatus,
    pub reviewer_note: Option<String>,
    pub corrected_label: Option<MatchLabel>,
    pub decided_at: Option<Timestamp>,
    pub created_at: Timestamp,
    pub reason: EscalationReason,
    /// Trace that produced or was reused for the result, if any.
    pub trace_id: Option<u64>,
}

impl ReviewItem {
    /// Label after review: the correction when overridden, else the verdict.
    pub fn final_label(&self) -> MatchLabel {
        self.corrected_label.unwrap_or(self.result.verdict.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ReviewDecision {
    Approve {
        #[serde(default)]
        note: Option<String>,
    },
    Override {
        corrected_label: MatchLabel,
        #[serde(default)]
        note: Option<String>,
    },
}

pub struct ReviewQueue {
    path: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    items: Mutex<Vec<ReviewItem>>,
}

impl std::fmt::Debug for ReviewQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewQueue").field("path", &self.path).finish()
    }
}

fn persist_err(path: &Path, e: impl std::fmt::Display) -> ReviewError {
    ReviewError::Persistence(format!("{}: {e}", path.display()))
}

impl ReviewQueue {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            path: None,
            clock,
            items: Mutex::new(Vec::new()),
        }
    }

    pub fn open(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, ReviewError> {
        let items = match fs::read_to_string(path) {
            Ok(text) => text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str(l).map_err(|e| persist_err(path, format!("line {}: {e}", i + 1)))
                })
                .collect::<Result<Vec<ReviewItem>, _>>()?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(persist_err(path, e)),
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            clock,
            items: Mutex::new(items),
        })
    }

    fn save(&self, items: &[ReviewItem]) -> Result<(), ReviewError> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut body = String::new();
        for item in items {
            body.push_str(&serde_json::to_string(item).expect("review item serializes"));
            body.push('\n');
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        fs::write(&tmp, body).map_err(|e| persist_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| persist_err(path, e))
    }

    pub fn push(
        &self,
        result: MappingResult,
        reason: EscalationReason,
        trace_id: Option<u64>,
    ) -> Result<ReviewItem, ReviewError> {
        let mut items = self.items.lock().expect("review lock poisoned");
        let item = ReviewItem {
            item_id: items.last().map_or(1, |i| i.item_id + 1),
            result,
            status: ReviewStatus::Pending,
            reviewer_note: None,
            corrected_label: None,
            decided_at: None,
            created_at: self.clock.now(),
            reason,
            trace_id,
        };
        items.push(item.clone());
        if let Err(e) = self.save(&items) {
            items.pop();
            return Err(e);
        }
        Ok(item)
    }

    /// Items in creation order, optionally filtered by status.
    pub fn list(&self, status: Option<ReviewStatus>) -> Vec<ReviewItem> {
        self.items
            .lock()
            .expect("review lock poisoned")
            .iter()
            .filter(|i| status.is_none_or(|s| i.status == s))
            .cloned()
            .collect()
    }

    pub fn get(&self, item_id: u64) -> Option<ReviewItem> {
        self.items
            .lock()
            .expect("review lock poisoned")
            .iter()
            .find(|i| i.item_id == item_id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.items.lock().expect("review lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Apply a terminal decision. `side_effect` runs while the queue is
    /// locked and before anything changes; if it fails the item stays pending.
    pub fn decide<F>(&self, item_id: u64, decision: &ReviewDecision, side_effect: F) -> Result<ReviewItem, ReviewError>
    where
        F: FnOnce(&ReviewItem) -> Result<(), ReviewError>,
    {
        let mut items = self.items.lock().expect("review lock poisoned");
        let idx = items
            .iter()
            .position(|i| i.item_id == item_id)
            .ok_or(ReviewError::NotFound(item_id))?;
        if items[idx].status != ReviewStatus::Pending {
            return Err(ReviewError::AlreadyDecided(item_id));
        }
        side_effect(&items[idx])?;
        let before = items[idx].clone();
        let item = &mut items[idx];
        match decision {
            ReviewDecision::Approve { note } => {
                item.status = ReviewStatus::Approved;
                item.reviewer_note = note.clone();
            }
            ReviewDecision::Override {
                corrected_label,
                note,
            } => {
                item.status = ReviewStatus::Overridden;
                item.corrected_label = Some(*corrected_label);
                item.reviewer_note = note.clone();
                item.result.verdict.label = *corrected_label;
            }
        }
        item.decided_at = Some(self.clock.now());
        let out = item.clone();
        if let Err(e) = self.save(&items) {
            items[idx] = before;
            return Err(e);
        }
        Ok(out)
    }
}
