//! Session recorder: bus envelopes to rotating JSONL part files.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::format::{part_name, LogHeader, LogRecord, SessionRecord, FORMAT_VERSION, SESSION_FILE};
use super::LogError;
use crate::bus::{Bus, InterfaceName, Publisher, Subscription};
use crate::clock::Nanos;
use crate::ifaces;
use crate::runtime::{Node, Step};

pub const LOGKIT_PROVIDER: &str = "logkit";
pub const RECORDER_QUEUE: usize = 4096;
pub const DEFAULT_MAX_PART_BYTES: u64 = 64 * 1024 * 1024;
pub const FLUSH_PERIOD: Nanos = Nanos(Nanos::PER_SEC);

/// Session ids from a seeded generator, so runs with one seed name their
/// sessions identically.
#[derive(Debug)]
pub struct SessionIds(ChaCha8Rng);

impl SessionIds {
    pub fn seeded(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_id(&mut self) -> String {
        uuid::Builder::from_random_bytes(self.0.random()).into_uuid().to_string()
    }
}

pub fn rfc3339(wall_ns: u64) -> String {
    DateTime::<Utc>::from_timestamp_nanos(wall_ns as i64).to_rfc3339_opts(SecondsFormat::Nanos, true)
}

#[derive(Clone, Debug)]
pub struct RecorderOptions {
    pub session_id: String,
    pub metadata: BTreeMap<String, String>,
    pub streams: Vec<InterfaceName>,
    pub capacity: usize,
    pub max_part_bytes: u64,
}

impl RecorderOptions {
    pub fn new(session_id: &str, streams: Vec<InterfaceName>) -> Self {
        Self {
            session_id: session_id.to_owned(),
            metadata: BTreeMap::new(),
            streams,
            capacity: RECORDER_QUEUE,
            max_part_bytes: DEFAULT_MAX_PART_BYTES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecorderSummary {
    pub dir: PathBuf,
    pub session: SessionRecord,
    pub records: u64,
    pub parts: u32,
    pub dropped: u64,
}

struct Part {
    out: BufWriter<File>,
    bytes: u64,
    records: u64,
}

pub struct Recorder {
    bus: Bus,
    dir: PathBuf,
    header: LogHeader,
    sub: Subscription,
    system: Publisher,
    part: Part,
    records: u64,
    dropped_seen: u64,
    dirty: bool,
    last_flush: Nanos,
    max_part_bytes: u64,
}

fn write_part_header(dir: &Path, header: &LogHeader) -> Result<Part, LogError> {
    let path = dir.join(part_name(header.part));
    let f = OpenOptions::new()
        .create_new(true)
        .write(true)
        .open(&path)
        .map_err(|e| LogError::io(&path, e))?;
    let mut out = BufWriter::new(f);
    let line = serde_json::to_string(header).expect("header serializes");
    writeln!(out, "{line}").map_err(|e| LogError::io(&path, e))?;
    Ok(Part {
        out,
        bytes: line.len() as u64 + 1,
        records: 0,
    })
}

impl Recorder {
    /// Creates `<root>/<session_id>/` and starts capturing. The system event
    /// stream is always captured alongside `opts.streams`.
    pub fn start(bus: &Bus, root: &Path, opts: RecorderOptions) -> Result<Self, LogError> {
        bus.register(&ifaces::system_events(), LOGKIT_PROVIDER)?;
        let mut streams = opts.streams.clone();
        if !streams.iter().any(|s| s.path == ifaces::system_events().path) {
            streams.push(ifaces::system_events());
        }
        let sub = bus.subscribe_many(&streams, opts.capacity)?;
        let dir = root.join(&opts.session_id);
        if dir.exists() {
            return Err(LogError::SessionExists(opts.session_id));
        }
        std::fs::create_dir_all(&dir).map_err(|e| LogError::io(&dir, e))?;
        let mut schemas: Vec<_> = streams.iter().filter_map(|s| bus.schema(&s.schema_id)).collect();
        schemas.sort_by_key(|s| s.id());
        schemas.dedup();
        let header = LogHeader {
            m_log: FORMAT_VERSION,
            part: 0,
            session: SessionRecord {
                session_id: opts.session_id.clone(),
                started: rfc3339(bus.clock().wall_ns()),
                ended: None,
                metadata: opts.metadata,
            },
            streams: streams.iter().map(|s| (s.path.clone(), s.clone())).collect(),
            schemas,
        };
        write_session_file(&dir, &header.session)?;
        let part = write_part_header(&dir, &header)?;
        Ok(Self {
            bus: bus.clone(),
            dir,
            header,
            sub,
            system: bus.publisher(&ifaces::system_events())?,
            part,
            records: 0,
            dropped_seen: 0,
            dirty: true,
            last_flush: bus.now(),
            max_part_bytes: opts.max_part_bytes.max(1),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn session_id(&self) -> &str {
        &self.header.session.session_id
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn backlog(&self) -> usize {
        self.sub.len()
    }

    fn rotate(&mut self) -> Result<(), LogError> {
        self.flush()?;
        self.header.part += 1;
        self.part = write_part_header(&self.dir, &self.header)?;
        let _ = self.system.publish(json!({
            "event": "log_rotated",
            "detail": {"part": self.header.part},
        }));
        Ok(())
    }

    fn write_line(&mut self, line: &str) -> Result<(), LogError> {
        let len = line.len() as u64 + 1;
        // A part always takes at least one record, however small the limit.
        if self.part.bytes + len > self.max_part_bytes && self.part.records > 0 {
            self.rotate()?;
        }
        let path = self.dir.join(part_name(self.header.part));
        writeln!(self.part.out, "{line}").map_err(|e| LogError::io(&path, e))?;
        self.part.bytes += len;
        self.part.records += 1;
        self.dirty = true;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        let path = self.dir.join(part_name(self.header.part));
        self.part.out.flush().map_err(|e| LogError::io(&path, e))?;
        self.dirty = false;
        Ok(())
    }

    /// Persists everything queued so far. Flushes once a second of clock time
    /// has passed since the last flush and reports queue overflow as a system
    /// event. Returns the number of records written.
    pub fn poll(&mut self, now: Nanos) -> Result<usize, LogError> {
        let batch = self.sub.drain();
        for env in &batch {
            let rec = LogRecord::new(
                &self.header.session.session_id,
                &env.interface.path,
                env.seq,
                env.t_mono,
                env.t_wall,
                &env.payload,
            );
            self.write_line(&rec.to_line())?;
        }
        self.records += batch.len() as u64;
        let dropped = self.sub.dropped();
        if dropped > self.dropped_seen {
            let _ = self.system.publish(json!({
                "event": "recorder_overflow",
                "detail": {"dropped": dropped - self.dropped_seen, "total": dropped},
            }));
            self.dropped_seen = dropped;
        }
        if self.dirty && now.saturating_sub(self.last_flush) >= FLUSH_PERIOD {
            self.flush()?;
            self.last_flush = now;
        }
        Ok(batch.len())
    }

    /// Drains, flushes and stamps the end time. Later calls restamp it.
    pub fn finish(&mut self) -> Result<RecorderSummary, LogError> {
        self.poll(self.bus.now())?;
        self.flush()?;
        self.header.session.ended = Some(rfc3339(self.bus.clock().wall_ns()));
        write_session_file(&self.dir, &self.header.session)?;
        Ok(RecorderSummary {
            dir: self.dir.clone(),
            session: self.header.session.clone(),
            records: self.records,
            parts: self.header.part + 1,
            dropped: self.sub.dropped(),
        })
    }

    /// Moves the recorder onto its own writer thread.
    pub fn spawn(self, period: Duration) -> RecorderThread {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("logkit-writer".into())
            .spawn(move || {
                let mut rec = self;
                while !flag.load(Ordering::Acquire) {
                    let now = rec.bus.now();
                    if let Err(e) = rec.poll(now) {
                        log::error!("recorder: {e}");
                        return Err(e);
                    }
                    std::thread::sleep(period);
                }
                rec.finish()
            })
            .expect("spawn writer thread");
        RecorderThread { stop, handle }
    }
}

fn write_session_file(dir: &Path, s: &SessionRecord) -> Result<(), LogError> {
    let path = dir.join(SESSION_FILE);
    let text = serde_json::to_string_pretty(s).expect("session record serializes");
    std::fs::write(&path, text + "\n").map_err(|e| LogError::io(&path, e))
}

pub struct RecorderThread {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<Result<RecorderSummary, LogError>>,
}

impl RecorderThread {
    pub fn finish(self) -> Result<RecorderSummary, LogError> {
        self.stop.store(true, Ordering::Release);
        self.handle
            .join()
            .unwrap_or_else(|_| Err(LogError::Io("writer thread panicked".into())))
    }
}

impl Node for Recorder {
    fn name(&self) -> &str {
        LOGKIT_PROVIDER
    }

    fn step(&mut self, now: Nanos) -> Step {
        match self.poll(now) {
            Ok(n) => Step {
                worked: n > 0,
                wake: self.dirty.then(|| self.last_flush + FLUSH_PERIOD),
            },
            Err(e) => {
                log::error!("recorder: {e}");
                Step::idle()
            }
        }
    }
}
