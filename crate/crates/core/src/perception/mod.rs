//! Perception stages over sensor topics: radar presence with hysteresis,
//! tap/hold touch classification and user-turn ingestion.

mod presence;
mod touch;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use presence::{presence_update, PresenceConfig, PresenceEvent, PresenceState};
pub use touch::{TouchClassifier, TouchConfig, TouchError, TouchEvent, TouchKind};

use crate::bus::{Bus, BusError, Publisher, Subscription};
use crate::clock::Nanos;
use crate::ifaces;
use crate::runtime::{Node, Step};

pub const PERCEPTION_PROVIDER: &str = "perception";

/// Queue depth for sensor subscriptions; drops are counted by the bus.
const SENSOR_QUEUE: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub presence: PresenceConfig,
    pub touch: TouchConfig,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.presence.validate()?;
        self.touch.validate()
    }
}

/// Trims and collapses whitespace; `None` for an empty turn.
pub fn normalize_turn(text: &str) -> Option<String> {
    let t = text.split_whitespace().collect::<Vec<_>>().join(" ");
    (!t.is_empty()).then_some(t)
}

pub fn touch_payload(e: &TouchEvent) -> serde_json::Value {
    json!({
        "pad_id": e.pad_id,
        "kind": e.kind,
        "t": e.t.0,
        "contact_duration": e.contact_duration,
    })
}

/// Runs both detectors on the bus. Inputs are timestamped by their envelopes,
/// so a replayed trace yields the same events.
pub struct PerceptionNode {
    cfg: PresenceConfig,
    presence: PresenceState,
    touch: TouchClassifier,
    radar_in: Subscription,
    touch_in: Subscription,
    presence_out: Publisher,
    gestures_out: Publisher,
}

impl PerceptionNode {
    pub fn new(bus: &Bus, cfg: DetectorConfig) -> Result<Self, BusError> {
        bus.register(&ifaces::presence(), PERCEPTION_PROVIDER)?;
        bus.register(&ifaces::touch_gestures(), PERCEPTION_PROVIDER)?;
        Ok(Self {
            cfg: cfg.presence,
            presence: PresenceState::default(),
            touch: TouchClassifier::new(cfg.touch),
            radar_in: bus.subscribe_with_capacity(&ifaces::radar_energy(), SENSOR_QUEUE)?,
            touch_in: bus.subscribe_with_capacity(&ifaces::touch_events(), SENSOR_QUEUE)?,
            presence_out: bus.publisher(&ifaces::presence())?,
            gestures_out: bus.publisher(&ifaces::touch_gestures())?,
        })
    }

    pub fn presence(&self) -> PresenceState {
        self.presence
    }

    fn emit(&self, events: Vec<TouchEvent>) {
        for e in events {
            let _ = self.gestures_out.publish(touch_payload(&e));
        }
    }
}

impl Node for PerceptionNode {
    fn name(&self) -> &str {
        PERCEPTION_PROVIDER
    }

    fn step(&mut self, now: Nanos) -> Step {
        let mut worked = false;
        for env in self.radar_in.drain() {
            let energy = env.payload["energy"].as_f64().unwrap_or(0.0);
            let (next, ev) = presence_update(&self.cfg, self.presence, energy, env.t_mono);
            self.presence = next;
            if let Some(ev) = ev {
                let _ = self.presence_out.publish(json!({
                    "event": ev.as_str(),
                    "energy_ema": next.energy_ema,
                }));
                worked = true;
            }
        }
        for env in self.touch_in.drain() {
            let pad = env.payload["pad_id"].as_str().unwrap_or_default().to_owned();
            let pressed = env.payload["pressed"].as_bool().unwrap_or(false);
            let holds = self.touch.poll(env.t_mono);
            worked |= !holds.is_empty();
            self.emit(holds);
            match self.touch.touch_update(&pad, pressed, env.t_mono) {
                Ok(events) => {
                    worked |= !events.is_empty();
                    self.emit(events);
                }
                Err(e) => log::warn!("touch: {e}"),
            }
        }
        let holds = self.touch.poll(now);
        worked |= !holds.is_empty();
        self.emit(holds);
        Step {
            worked,
            wake: self.touch.next_deadline(),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::clock::VirtualClock;
    use crate::expression::Library;
    use crate::model::RobotDescription;
    use crate::runtime::Executor;
    use crate::sim::{Scenario, SimProvider, SimRates};

    #[test]
    fn normalizes_turns() {
        assert_eq!(normalize_turn("  hello \n there "), Some("hello there".into()));
        assert_eq!(normalize_turn(" \t "), None);
    }

    #[test]
    fn radar_and_touch_scenario_produce_events() {
        let vc = Arc::new(VirtualClock::new());
        let bus = Bus::new(vc.clone());
        let desc = Arc::new(RobotDescription::builtin());
        let lib = Arc::new(Library::builtin(&desc));
        let s = Scenario::from_json(
            r#"{"events":[
                {"t":1.0,"kind":"radar_energy","value":0.9},
                {"t":2.0,"kind":"touch","pad_id":"head","pressed":true},
                {"t":2.25,"kind":"touch","pad_id":"head","pressed":false},
                {"t":3.0,"kind":"touch","pad_id":"head","pressed":true},
                {"t":4.5,"kind":"touch","pad_id":"head","pressed":false},
                {"t":5.0,"kind":"radar_energy","value":0.0}
            ]}"#,
        )
        .unwrap();
        let sim = SimProvider::new(&bus, desc, lib, &s, SimRates::default()).unwrap();
        let node = PerceptionNode::new(&bus, DetectorConfig::default()).unwrap();
        let pres = bus.subscribe(&ifaces::presence()).unwrap();
        let gest = bus.subscribe(&ifaces::touch_gestures()).unwrap();
        let mut ex = Executor::new(bus.clone(), Some(vc));
        ex.add(sim);
        ex.add(node);
        ex.run_until(Some(Nanos::from_millis(10_000)));
        let p: Vec<String> = pres.drain().iter().map(|e| e.payload["event"].as_str().unwrap().to_owned()).collect();
        assert_eq!(p, ["entered", "left"]);
        let g = gest.drain();
        let kinds: Vec<&str> = g.iter().map(|e| e.payload["kind"].as_str().unwrap()).collect();
        assert_eq!(kinds, ["tap", "hold_start", "hold_end"]);
        assert_eq!(g[1].t_mono, Nanos::from_millis(4000), "hold_start fires at the threshold");
    }
}
