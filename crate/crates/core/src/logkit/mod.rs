//! Session logging: JSONL capture of bus traffic, deterministic replay and
//! passive health snapshots.
//!
//! A session lives in `<root>/<session_id>/` as `session.json` plus
//! `part-NNNN.jsonl` files. Each part starts with a header line naming the
//! session, the recorded interfaces and their schemas; every following line is
//! one record whose `crc32` covers its `payload` text.

mod format;
mod health;
mod recorder;
mod replay;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use format::{
    part_files, part_name, read_part, read_session, LogHeader, LogRecord, PartLog, SessionLog, SessionRecord,
    Strictness, FORMAT_VERSION, SESSION_FILE,
};
pub use health::{health, HealthReport, InterfaceHealth, NodeHealth, DEFAULT_LIVENESS};
pub use recorder::{
    rfc3339, Recorder, RecorderOptions, RecorderSummary, RecorderThread, SessionIds, DEFAULT_MAX_PART_BYTES,
    FLUSH_PERIOD, LOGKIT_PROVIDER, RECORDER_QUEUE,
};
pub use replay::{register_streams, replay, ReplaySpeed, ReplayStats, REPLAY_PROVIDER};

use crate::bus::BusError;

/// Environment variable overriding the configured log root.
pub const DATA_DIR_ENV: &str = "M_DATA_DIR";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogError {
    #[error("{0}")]
    Io(String),
    #[error("storage full: {0}")]
    StorageFull(String),
    #[error("corrupt log {file} at line {line} (last valid record: {}): {detail}", last_valid.as_deref().unwrap_or("none"))]
    CorruptLog {
        file: String,
        line: usize,
        last_valid: Option<String>,
        detail: String,
    },
    #[error("session {0} already exists")]
    SessionExists(String),
    #[error("{0}")]
    NotFound(String),
    #[error("record names stream {0} missing from the header")]
    UnknownStream(String),
    #[error("replay speed {0} must be > 0")]
    InvalidSpeed(f64),
    #[error(transparent)]
    Bus(#[from] BusError),
}

impl LogError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            LogError::StorageFull(path.display().to_string())
        } else {
            LogError::Io(format!("{}: {e}", path.display()))
        }
    }
}

/// `M_DATA_DIR` if set, else `configured`.
pub fn log_root(configured: &Path) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| configured.to_owned())
}

/// Outcome of comparing two sessions' content.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub left: usize,
    pub right: usize,
    /// `(stream, seq)` present on one side only or with differing payloads.
    pub mismatches: Vec<(String, u64)>,
}

impl VerifyReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty() && self.left == self.right
    }
}

/// Compares the `(stream, seq, payload)` multisets of two sessions.
pub fn verify_pair(a: &SessionLog, b: &SessionLog) -> VerifyReport {
    let (ma, mb) = (a.content_multiset(), b.content_multiset());
    let mut mismatches = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < ma.len() || j < mb.len() {
        match (ma.get(i), mb.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                mismatches.push((x.0.clone(), x.1));
                i += 1;
            }
            (Some(_), Some(y)) => {
                mismatches.push((y.0.clone(), y.1));
                j += 1;
            }
            (Some(x), None) => {
                mismatches.push((x.0.clone(), x.1));
                i += 1;
            }
            (None, Some(y)) => {
                mismatches.push((y.0.clone(), y.1));
                j += 1;
            }
            (None, None) => unreachable!("loop condition"),
        }
    }
    VerifyReport {
        left: ma.len(),
        right: mb.len(),
        mismatches,
    }
}
