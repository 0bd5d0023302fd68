//! Fixtures shared by the hot-path benchmarks.

use std::sync::Arc;

use m_core::bus::{Bus, Publisher, Subscription};
use m_core::clock::VirtualClock;
use m_core::ifaces;
use m_core::model::{JointId, RobotDescription};

/// A virtual-clock bus with one joint_states subscriber, so publishes pay
/// for validation and fan-out.
pub fn joint_bus() -> (Bus, Publisher, Subscription) {
    let bus = Bus::new(Arc::new(VirtualClock::new()));
    let iface = ifaces::joint_states();
    bus.register(&iface, "bench").expect("fresh bus");
    let publ = bus.publisher(&iface).expect("registered above");
    let sub = bus.subscribe_with_capacity(&iface, 1024).expect("registered above");
    (bus, publ, sub)
}

/// A joint_states payload with every joint set.
pub fn joint_payload(desc: &RobotDescription, t: f64) -> serde_json::Value {
    let position: serde_json::Map<String, serde_json::Value> = JointId::ALL
        .iter()
        .map(|j| (j.as_str().to_owned(), desc.limits(*j).clamp(t.sin()).into()))
        .collect();
    let velocity: serde_json::Map<String, serde_json::Value> =
        JointId::ALL.iter().map(|j| (j.as_str().to_owned(), 0.0.into())).collect();
    serde_json::json!({ "t_mono": (t * 1e9) as u64, "position": position, "velocity": velocity })
}
