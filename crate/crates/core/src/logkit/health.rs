//! Health snapshots assembled from the bus's atomic counters only.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bus::{Bus, InterfaceKind};
use crate::clock::Nanos;

/// A node whose last heartbeat is older than this is reported dead.
pub const DEFAULT_LIVENESS: Duration = Duration::from_secs(2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceHealth {
    pub path: String,
    pub kind: InterfaceKind,
    pub schema: String,
    pub messages: u64,
    /// Seconds since the last message, or since bus start if none.
    pub last_message_age: f64,
    pub drop_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeHealth {
    pub name: String,
    pub alive: bool,
    pub last_heartbeat_age: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub uptime: f64,
    pub interfaces: Vec<InterfaceHealth>,
    pub nodes: Vec<NodeHealth>,
}

fn age(now: Nanos, then: Nanos) -> f64 {
    now.saturating_sub(then).as_secs_f64()
}

pub fn health(bus: &Bus, liveness: Duration) -> HealthReport {
    let now = bus.now();
    let start = bus.started();
    let interfaces = bus
        .stats()
        .into_iter()
        .map(|s| InterfaceHealth {
            path: s.interface.path.clone(),
            kind: s.interface.kind,
            schema: s.interface.schema_id.clone(),
            messages: s.messages,
            last_message_age: age(now, s.last_message.unwrap_or(start)),
            drop_count: s.drops,
        })
        .collect();
    let nodes = bus
        .heartbeats()
        .into_iter()
        .map(|(name, t)| {
            let a = age(now, t);
            NodeHealth {
                name,
                alive: a <= liveness.as_secs_f64(),
                last_heartbeat_age: a,
            }
        })
        .collect();
    HealthReport {
        uptime: age(now, start),
        interfaces,
        nodes,
    }
}
