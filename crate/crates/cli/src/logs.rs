//! Inspection commands: `log replay`, `log verify` and `registry`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use m_core::bus::{registry_diff as diff_registries, Bus, InterfaceRegistry};
use m_core::clock::{RealClock, VirtualClock};
use m_core::logkit::{
    log_root, read_session, register_streams, replay as replay_log, verify_pair, LogError, Recorder, RecorderOptions,
    ReplaySpeed, SessionLog, Strictness,
};
use m_core::sim::{backend_registry, Backend};

use crate::commands::load_config;
use crate::exit::{fail, CORRUPT, DIFFERENT, INVALID, OK, USAGE};

fn session_dir(id: &str, config: Option<&Path>) -> anyhow::Result<PathBuf> {
    let cfg = load_config(config)?;
    let dir = log_root(&cfg.config.log_root).join(id);
    if !dir.is_dir() {
        return Err(fail(USAGE, format!("no session {id} under {}", dir.parent().unwrap_or(&dir).display())));
    }
    Ok(dir)
}

fn open(id: &str, config: Option<&Path>) -> anyhow::Result<SessionLog> {
    Ok(read_session(&session_dir(id, config)?, Strictness::Strict)?)
}

fn parse_speed(s: &str) -> anyhow::Result<ReplaySpeed> {
    if s == "max" {
        return Ok(ReplaySpeed::AsFastAsPossible);
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(ReplaySpeed::Multiplier(x)),
        _ => Err(fail(INVALID, format!("speed {s:?} must be a positive number or max"))),
    }
}

pub fn replay(id: &str, speed: &str, config: Option<&Path>) -> anyhow::Result<i32> {
    let speed = parse_speed(speed)?;
    let log = open(id, config)?;
    let bus = Bus::new(RealClock::shared());
    let stats = replay_log(&log, &bus, speed, |_| Ok(()))?;
    let span = stats.finished.saturating_sub(stats.started).as_secs_f64();
    println!("replayed {} records from {} streams in {span:.3} s", stats.records, log.streams.len());
    for (path, n) in per_stream(&log) {
        println!("  {path} {n}");
    }
    Ok(OK)
}

fn per_stream(log: &SessionLog) -> Vec<(String, usize)> {
    log.streams
        .keys()
        .map(|p| (p.clone(), log.stream(p).count()))
        .collect()
}

/// Replays `log` onto a fresh virtual bus and records it again under a
/// scratch root.
fn round_trip(log: &SessionLog) -> Result<SessionLog, LogError> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let root = std::env::temp_dir().join(format!("m-verify-{}-{stamp}", std::process::id()));
    let bus = Bus::new(Arc::new(VirtualClock::new()));
    register_streams(log, &bus)?;
    let streams = log.streams.values().cloned().collect();
    let mut rec = Recorder::start(&bus, &root, RecorderOptions::new(&log.session.session_id, streams))?;
    let r = replay_log(log, &bus, ReplaySpeed::AsFastAsPossible, |now| rec.poll(now).map(|_| ()))
        .and_then(|_| rec.finish())
        .and_then(|s| read_session(&s.dir, Strictness::Strict));
    let _ = std::fs::remove_dir_all(&root);
    r
}

pub fn verify(id: &str, other: Option<&str>, config: Option<&Path>) -> anyhow::Result<i32> {
    let a = open(id, config)?;
    let b = match other {
        Some(o) => open(o, config)?,
        None => round_trip(&a)?,
    };
    let r = verify_pair(&a, &b);
    for (stream, seq) in &r.mismatches {
        println!("mismatch {stream}#{seq}");
    }
    if r.identical() {
        println!("identical: {} records", r.left);
        Ok(OK)
    } else {
        println!("different: {} vs {} records, {} mismatches", r.left, r.right, r.mismatches.len());
        Ok(DIFFERENT)
    }
}

/// A backend name or a path to an exported registry.
fn registry(spec: &str) -> anyhow::Result<InterfaceRegistry> {
    if let Ok(b) = spec.parse::<Backend>() {
        return Ok(backend_registry(b)?);
    }
    let text = match std::fs::read_to_string(spec) {
        Ok(t) => t,
        Err(e) => return Err(fail(USAGE, format!("cannot read registry {spec}: {e}"))),
    };
    InterfaceRegistry::from_canonical_json(&text).map_err(|e| fail(CORRUPT, format!("corrupt registry {spec}: {e}")))
}

pub fn registry_export(mode: &str, out: Option<&Path>) -> anyhow::Result<i32> {
    let b: Backend = mode.parse().map_err(|e| fail(USAGE, e))?;
    let text = backend_registry(b)?.to_canonical_json();
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(USAGE, format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(OK)
}

pub fn registry_diff(a: &str, b: &str) -> anyhow::Result<i32> {
    let d = diff_registries(&registry(a)?, &registry(b)?);
    for x in &d {
        println!("{x}");
    }
    if d.is_empty() {
        println!("equivalent");
        Ok(OK)
    } else {
        Ok(DIFFERENT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_parsing() {
        assert_eq!(parse_speed("max").unwrap(), ReplaySpeed::AsFastAsPossible);
        assert_eq!(parse_speed("2.5").unwrap(), ReplaySpeed::Multiplier(2.5));
        assert!(parse_speed("0").is_err());
        assert!(parse_speed("fast").is_err());
    }
}
