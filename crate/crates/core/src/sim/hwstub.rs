//! Hardware-backend stand-in: the interface table a physical robot exposes,
//! with no actuators behind it. Goals abort and service calls fail.

use crate::bus::{Bus, BusError, GoalPolicy, InterfaceKind, InterfaceName};

pub const HW_PROVIDER: &str = "hardware-stub";

/// Declared independently of the simulator so the equivalence check compares
/// two separate sources.
const INTERFACES: &[(&str, InterfaceKind, &str)] = &[
    ("/m/joint_states", InterfaceKind::Topic, "m/JointState@1"),
    ("/m/face_state", InterfaceKind::Topic, "m/FaceState@1"),
    ("/m/radar_energy", InterfaceKind::Topic, "m/RadarEnergy@1"),
    ("/m/touch_events", InterfaceKind::Topic, "m/TouchContact@1"),
    ("/m/haptic_state", InterfaceKind::Topic, "m/HapticState@1"),
    ("/m/user_turns", InterfaceKind::Topic, "m/UserTurn@1"),
    ("/m/set_joint_targets", InterfaceKind::Service, "m/SetJointTargets@1"),
    ("/m/play_timeline", InterfaceKind::Action, "m/PlayTimeline@1"),
    ("/m/speak", InterfaceKind::Action, "m/Speak@1"),
];

pub fn interfaces() -> Vec<InterfaceName> {
    INTERFACES
        .iter()
        .map(|(p, k, s)| InterfaceName::new(p, *k, s).expect("static interface name"))
        .collect()
}

#[derive(Debug)]
pub struct HardwareStub;

impl HardwareStub {
    pub fn register(bus: &Bus) -> Result<Self, BusError> {
        for i in interfaces() {
            match i.kind {
                InterfaceKind::Topic => bus.register(&i, HW_PROVIDER)?,
                InterfaceKind::Service => bus.serve(&i, HW_PROVIDER, |_| {
                    Err("hardware stub has no actuators".to_owned())
                })?,
                InterfaceKind::Action => bus.serve_action(&i, HW_PROVIDER, GoalPolicy::Preempt, |g| {
                    let _ = g.abort("hardware stub has no actuators");
                })?,
            }
        }
        Ok(HardwareStub)
    }
}
