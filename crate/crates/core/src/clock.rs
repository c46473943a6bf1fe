//! Timestamps for traces and review items.
//!
//! Stub runs use [`LogicalClock`] so that two runs over the same input write
//! byte-identical files.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};

pub type Timestamp = DateTime<Utc>;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

/// Advances one second per reading, starting at a fixed instant.
#[derive(Debug)]
pub struct LogicalClock {
    next: AtomicI64,
}

impl LogicalClock {
    pub const EPOCH: i64 = 1_704_067_200; // 2024-01-01T00:00:00Z

    pub fn new() -> Self {
        Self::starting_at(Self::EPOCH)
    }

    pub fn starting_at(unix_seconds: i64) -> Self {
        Self {
            next: AtomicI64::new(unix_seconds),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> Timestamp {
        let s = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(s, 0).single().expect("timestamp in range")
    }
}
