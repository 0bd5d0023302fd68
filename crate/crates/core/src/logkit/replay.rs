//! Republishing a recorded session onto a bus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::format::SessionLog;
use super::LogError;
use crate::bus::{Bus, InterfaceName};
use crate::clock::Nanos;

pub const REPLAY_PROVIDER: &str = "replay";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReplaySpeed {
    AsFastAsPossible,
    /// Recorded gaps divided by this factor.
    Multiplier(f64),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayStats {
    pub records: usize,
    pub started: Nanos,
    pub finished: Nanos,
}

/// Registers the log's streams on `bus` so subscribers can attach before
/// replay starts.
pub fn register_streams(log: &SessionLog, bus: &Bus) -> Result<(), LogError> {
    for iface in log.streams.values() {
        bus.register(iface, REPLAY_PROVIDER)?;
    }
    Ok(())
}

/// Republishes every record on its original stream with its original `seq`
/// and payload, in `t_mono` order (file order breaks ties). `after_each` runs
/// after every injection, which lets a recorder on the same bus keep up.
pub fn replay(
    log: &SessionLog,
    bus: &Bus,
    speed: ReplaySpeed,
    mut after_each: impl FnMut(Nanos) -> Result<(), LogError>,
) -> Result<ReplayStats, LogError> {
    if let ReplaySpeed::Multiplier(x) = speed {
        if !(x.is_finite() && x > 0.0) {
            return Err(LogError::InvalidSpeed(x));
        }
    }
    register_streams(log, bus)?;
    let ifaces: BTreeMap<&str, &InterfaceName> = log.streams.iter().map(|(p, i)| (p.as_str(), i)).collect();
    let mut order: Vec<usize> = (0..log.records.len()).collect();
    order.sort_by_key(|&i| log.records[i].t_mono);
    let started = bus.now();
    let t_first = order.first().map(|&i| log.records[i].t_mono).unwrap_or_default();
    for &i in &order {
        let r = &log.records[i];
        let iface = ifaces
            .get(r.stream.as_str())
            .ok_or_else(|| LogError::UnknownStream(r.stream.clone()))?;
        if let ReplaySpeed::Multiplier(x) = speed {
            let gap = (r.t_mono - t_first).as_secs_f64() / x;
            bus.clock().wait_until(started + Nanos::from_secs_f64(gap));
        }
        bus.inject(iface, r.seq, r.payload_value())?;
        after_each(bus.now())?;
    }
    Ok(ReplayStats {
        records: order.len(),
        started,
        finished: bus.now(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::clock::{RealClock, VirtualClock};
    use crate::ifaces;
    use crate::logkit::format::{read_session, Strictness};
    use crate::logkit::recorder::{Recorder, RecorderOptions};

    fn record_sample(root: &std::path::Path) -> SessionLog {
        let vc = Arc::new(VirtualClock::new());
        let bus = Bus::new(vc.clone());
        let (r, t) = (ifaces::radar_energy(), ifaces::touch_events());
        bus.register(&r, "test").unwrap();
        bus.register(&t, "test").unwrap();
        let mut rec = Recorder::start(&bus, root, RecorderOptions::new("orig", vec![r.clone(), t.clone()])).unwrap();
        for i in 0..50u32 {
            vc.advance(Nanos::from_millis(20));
            bus.publish(&r, json!({"energy": f64::from(i) * 0.013})).unwrap();
            if i % 7 == 0 {
                bus.publish(&t, json!({"pad_id": "body", "pressed": i % 2 == 0})).unwrap();
            }
        }
        let s = rec.finish().unwrap();
        read_session(&s.dir, Strictness::Strict).unwrap()
    }

    #[test]
    fn record_replay_record_preserves_content() {
        let root = tempfile::tempdir().unwrap();
        let orig = record_sample(root.path());
        let bus = Bus::new(Arc::new(VirtualClock::new()));
        register_streams(&orig, &bus).unwrap();
        let streams = orig.streams.values().cloned().collect();
        let mut rec = Recorder::start(&bus, root.path(), RecorderOptions::new("again", streams)).unwrap();
        let stats = replay(&orig, &bus, ReplaySpeed::AsFastAsPossible, |now| rec.poll(now).map(|_| ())).unwrap();
        assert_eq!(stats.records, orig.records.len());
        let again = read_session(&rec.finish().unwrap().dir, Strictness::Strict).unwrap();
        assert_eq!(again.content_multiset(), orig.content_multiset());
    }

    #[test]
    fn speed_multiplier_scales_gaps_under_virtual_time() {
        let root = tempfile::tempdir().unwrap();
        let orig = record_sample(root.path());
        let vc = Arc::new(VirtualClock::new());
        let bus = Bus::new(vc.clone());
        let mut seen = Vec::new();
        replay(&orig, &bus, ReplaySpeed::Multiplier(2.0), |now| {
            seen.push(now);
            Ok(())
        })
        .unwrap();
        let src: Vec<Nanos> = {
            let mut v: Vec<Nanos> = orig.records.iter().map(|r| r.t_mono).collect();
            v.sort();
            v
        };
        for w in 1..src.len() {
            let want = (src[w] - src[0]).as_secs_f64() / 2.0;
            let got = (seen[w] - seen[0]).as_secs_f64();
            assert!((want - got).abs() < 1e-6, "{want} vs {got}");
        }
    }

    #[test]
    fn speed_multiplier_on_real_clock_is_close() {
        let root = tempfile::tempdir().unwrap();
        let orig = record_sample(root.path());
        let bus = Bus::new(RealClock::shared());
        let mut seen = Vec::new();
        replay(&orig, &bus, ReplaySpeed::Multiplier(4.0), |now| {
            seen.push(now);
            Ok(())
        })
        .unwrap();
        let span = (seen[seen.len() - 1] - seen[0]).as_secs_f64();
        let want = orig.records.iter().map(|r| r.t_mono).max().unwrap().as_secs_f64()
            - orig.records.iter().map(|r| r.t_mono).min().unwrap().as_secs_f64();
        assert!((span - want / 4.0).abs() < 0.05, "span {span}");
    }

    #[test]
    fn bad_speed_is_rejected() {
        let root = tempfile::tempdir().unwrap();
        let orig = record_sample(root.path());
        let bus = Bus::new(Arc::new(VirtualClock::new()));
        assert!(matches!(
            replay(&orig, &bus, ReplaySpeed::Multiplier(0.0), |_| Ok(())),
            Err(LogError::InvalidSpeed(_))
        ));
    }
}
