//! On-disk JSON Lines grammar: one header line, then one record per line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::LogError;
use crate::bus::{InterfaceName, Schema};
use crate::clock::Nanos;

pub const FORMAT_VERSION: u32 = 1;
pub const SESSION_FILE: &str = "session.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    /// RFC 3339, UTC.
    pub started: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// First line of every part file. Carries what a reader needs without the
/// live registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub m_log: u32,
    pub part: u32,
    pub session: SessionRecord,
    /// Recorded stream path to its full interface name.
    pub streams: BTreeMap<String, InterfaceName>,
    pub schemas: Vec<Schema>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRecord {
    pub session_id: String,
    pub stream: String,
    pub seq: u64,
    pub t_mono: Nanos,
    pub t_wall: u64,
    /// Canonical JSON text exactly as written.
    pub payload: Box<RawValue>,
    /// CRC-32 of the payload text.
    pub crc32: u32,
}

impl PartialEq for LogRecord {
    fn eq(&self, o: &Self) -> bool {
        self.session_id == o.session_id
            && self.stream == o.stream
            && self.seq == o.seq
            && self.t_mono == o.t_mono
            && self.t_wall == o.t_wall
            && self.payload.get() == o.payload.get()
            && self.crc32 == o.crc32
    }
}

impl LogRecord {
    pub fn new(session_id: &str, stream: &str, seq: u64, t_mono: Nanos, t_wall: u64, payload: &serde_json::Value) -> Self {
        let text = serde_json::to_string(payload).expect("a Value always serializes");
        Self {
            session_id: session_id.to_owned(),
            stream: stream.to_owned(),
            seq,
            t_mono,
            t_wall,
            crc32: crc32fast::hash(text.as_bytes()),
            payload: RawValue::from_string(text).expect("serializer output is valid JSON"),
        }
    }

    pub fn checksum_ok(&self) -> bool {
        crc32fast::hash(self.payload.get().as_bytes()) == self.crc32
    }

    pub fn payload_value(&self) -> serde_json::Value {
        serde_json::from_str(self.payload.get()).expect("payload was checked on read")
    }

    /// `stream#seq`, how corrupt-log errors name a record.
    pub fn locator(&self) -> String {
        format!("{}#{}", self.stream, self.seq)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("a record always serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    /// Any damaged line is an error.
    Strict,
    /// Reading stops at the first damaged line; earlier records are kept.
    Lenient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartLog {
    pub path: PathBuf,
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    /// Set in lenient mode when reading stopped early.
    pub damage: Option<LogError>,
}

fn corrupt(path: &Path, line: usize, last: Option<&LogRecord>, detail: String) -> LogError {
    LogError::CorruptLog {
        file: path.display().to_string(),
        line,
        last_valid: last.map(LogRecord::locator),
        detail,
    }
}

/// Reads one part file.
pub fn read_part(path: &Path, mode: Strictness) -> Result<PartLog, LogError> {
    let f = File::open(path).map_err(|e| LogError::io(path, e))?;
    let mut lines = BufReader::new(f).split(b'\n');
    let header_bytes = match lines.next() {
        Some(Ok(b)) => b,
        Some(Err(e)) => return Err(LogError::io(path, e)),
        None => return Err(corrupt(path, 1, None, "missing header".into())),
    };
    let header: LogHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| corrupt(path, 1, None, format!("header: {e}")))?;
    if header.m_log != FORMAT_VERSION {
        return Err(corrupt(path, 1, None, format!("unsupported format version {}", header.m_log)));
    }
    let mut records: Vec<LogRecord> = Vec::new();
    let mut damage = None;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let bytes = line.map_err(|e| LogError::io(path, e))?;
        if bytes.is_empty() {
            continue;
        }
        let parsed = serde_json::from_slice::<LogRecord>(&bytes)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                if r.checksum_ok() {
                    Ok(r)
                } else {
                    Err("payload checksum mismatch".to_owned())
                }
            });
        match parsed {
            Ok(r) => records.push(r),
            Err(detail) => {
                let e = corrupt(path, lineno, records.last(), detail);
                match mode {
                    Strictness::Strict => return Err(e),
                    Strictness::Lenient => {
                        damage = Some(e);
                        break;
                    }
                }
            }
        }
    }
    Ok(PartLog {
        path: path.to_owned(),
        header,
        records,
        damage,
    })
}

/// A whole session: every part in order.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub dir: PathBuf,
    pub session: SessionRecord,
    pub streams: BTreeMap<String, InterfaceName>,
    pub records: Vec<LogRecord>,
    pub damage: Vec<LogError>,
}

impl SessionLog {
    /// Records of one stream, in file order.
    pub fn stream<'a>(&'a self, path: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.stream == path)
    }

    /// `(stream, seq, payload)` triples, sorted. Two logs of the same traffic
    /// compare equal on this regardless of timing.
    pub fn content_multiset(&self) -> Vec<(String, u64, String)> {
        let mut v: Vec<_> = self
            .records
            .iter()
            .map(|r| (r.stream.clone(), r.seq, r.payload.get().to_owned()))
            .collect();
        v.sort();
        v
    }
}

pub fn part_name(part: u32) -> String {
    format!("part-{part:04}.jsonl")
}

pub fn part_files(dir: &Path) -> Result<Vec<PathBuf>, LogError> {
    let rd = std::fs::read_dir(dir).map_err(|e| LogError::io(dir, e))?;
    let mut parts: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("part-") && n.ends_with(".jsonl"))
        })
        .collect();
    parts.sort();
    Ok(parts)
}

pub fn read_session(dir: &Path, mode: Strictness) -> Result<SessionLog, LogError> {
    let parts = part_files(dir)?;
    if parts.is_empty() {
        return Err(LogError::NotFound(format!("no log parts in {}", dir.display())));
    }
    let mut log: Option<SessionLog> = None;
    for p in parts {
        let part = read_part(&p, mode)?;
        let log = log.get_or_insert_with(|| SessionLog {
            dir: dir.to_owned(),
            session: part.header.session.clone(),
            streams: BTreeMap::new(),
            records: Vec::new(),
            damage: Vec::new(),
        });
        log.streams.extend(part.header.streams);
        log.records.extend(part.records);
        log.damage.extend(part.damage);
    }
    let mut log = log.expect("at least one part");
    // session.json carries the end time once the recorder closed cleanly.
    if let Ok(text) = std::fs::read_to_string(dir.join(SESSION_FILE)) {
        if let Ok(s) = serde_json::from_str::<SessionRecord>(&text) {
            log.session = s;
        }
    }
    Ok(log)
}
