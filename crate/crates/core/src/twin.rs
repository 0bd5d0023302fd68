//! Digital-twin wire protocol and its transport-free server side.
//!
//! Frames are JSON text objects tagged by `kind`:
//!
//! | kind           | direction | fields                                         |
//! |----------------|-----------|------------------------------------------------|
//! | `hello`        | server    | `description` (robot JSON), `mode`             |
//! | `mode`         | server    | `mode`: `sim_control` or `mirror`              |
//! | `joint_states` | server    | `t_mono` (ns), `position`: joint name → rad    |
//! | `face_state`   | server    | `expression`                                   |
//! | `set_joint`    | client    | `joint`, `target` (rad)                        |
//! | `error`        | server    | `message`                                      |

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bus::{Bus, Envelope};
use crate::clock::Nanos;
use crate::ifaces;
use crate::model::{JointId, RobotDescription};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwinMode {
    /// Clients may steer joints.
    #[default]
    SimControl,
    /// Read-only view of a live robot.
    Mirror,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TwinMessage {
    Hello { description: Value, mode: TwinMode },
    Mode { mode: TwinMode },
    JointStates { t_mono: u64, position: BTreeMap<JointId, f64> },
    FaceState { expression: String },
    SetJoint { joint: JointId, target: f64 },
    Error { message: String },
}

impl TwinMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("twin frames serialize")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Twin frame for a bus envelope, for the streams the twin shows.
    pub fn from_envelope(env: &Envelope) -> Option<Self> {
        if env.interface.path == ifaces::joint_states().path {
            let position = serde_json::from_value(env.payload["position"].clone()).ok()?;
            Some(TwinMessage::JointStates {
                t_mono: env.payload["t_mono"].as_u64().unwrap_or(env.t_mono.0),
                position,
            })
        } else if env.interface.path == ifaces::face_state().path {
            Some(TwinMessage::FaceState {
                expression: env.payload["expression"].as_str()?.to_owned(),
            })
        } else {
            None
        }
    }
}

/// Passes one frame per `min_period`, dropping the rest.
#[derive(Clone, Debug)]
pub struct Decimator {
    min_period: Nanos,
    last: Option<Nanos>,
}

impl Decimator {
    pub fn new(max_hz: f64) -> Self {
        Self {
            min_period: Nanos::period_of_hz(max_hz),
            last: None,
        }
    }

    pub fn admit(&mut self, t: Nanos) -> bool {
        match self.last {
            Some(l) if t.saturating_sub(l) < self.min_period => false,
            _ => {
                self.last = Some(t);
                true
            }
        }
    }
}

const CALL_TIMEOUT: Duration = Duration::from_secs(1);

/// Server-side protocol state shared by all twin connections.
#[derive(Debug)]
pub struct TwinHub {
    desc: Arc<RobotDescription>,
    mode: TwinMode,
    max_hz: f64,
    set_joint_frames: AtomicU64,
    applied: AtomicU64,
}

impl TwinHub {
    pub fn new(desc: Arc<RobotDescription>, mode: TwinMode, max_hz: f64) -> Self {
        Self {
            desc,
            mode,
            max_hz,
            set_joint_frames: AtomicU64::new(0),
            applied: AtomicU64::new(0),
        }
    }

    pub fn description(&self) -> &RobotDescription {
        &self.desc
    }

    pub fn mode(&self) -> TwinMode {
        self.mode
    }

    pub fn decimator(&self) -> Decimator {
        Decimator::new(self.max_hz)
    }

    pub fn hello(&self) -> TwinMessage {
        TwinMessage::Hello {
            description: serde_json::to_value(&*self.desc).expect("description serializes"),
            mode: self.mode,
        }
    }

    /// `set_joint` frames received, in any mode.
    pub fn set_joint_frames(&self) -> u64 {
        self.set_joint_frames.load(Ordering::Relaxed)
    }

    /// `set_joint` frames forwarded to the robot.
    pub fn applied(&self) -> u64 {
        self.applied.load(Ordering::Relaxed)
    }

    /// Handles one client frame. Returns the reply frames; an empty list
    /// means the frame was accepted silently.
    pub fn handle_text(&self, bus: &Bus, text: &str) -> Vec<TwinMessage> {
        let err = |m: String| vec![TwinMessage::Error { message: m }];
        let msg = match TwinMessage::parse(text) {
            Ok(m) => m,
            Err(e) => return err(format!("malformed frame: {e}")),
        };
        match msg {
            TwinMessage::SetJoint { joint, target } => {
                self.set_joint_frames.fetch_add(1, Ordering::Relaxed);
                if self.mode == TwinMode::Mirror {
                    return err("set_joint rejected: twin is in mirror mode".into());
                }
                if !target.is_finite() {
                    return err(format!("target {target} is not finite"));
                }
                let clamped = self.desc.limits(joint).clamp(target);
                let Some(svc) = bus.lookup(&ifaces::set_joint_targets().path, ifaces::set_joint_targets().kind)
                else {
                    return err("no joint target service on the bus".into());
                };
                let req = json!({"targets": {joint.as_str(): clamped}});
                match bus.call(&svc, req, CALL_TIMEOUT) {
                    Ok(_) => {
                        self.applied.fetch_add(1, Ordering::Relaxed);
                        Vec::new()
                    }
                    Err(e) => err(format!("set_joint failed: {e}")),
                }
            }
            other => err(format!("unexpected client frame kind {:?}", kind_of(&other))),
        }
    }
}

fn kind_of(m: &TwinMessage) -> &'static str {
    match m {
        TwinMessage::Hello { .. } => "hello",
        TwinMessage::Mode { .. } => "mode",
        TwinMessage::JointStates { .. } => "joint_states",
        TwinMessage::FaceState { .. } => "face_state",
        TwinMessage::SetJoint { .. } => "set_joint",
        TwinMessage::Error { .. } => "error",
    }
}
