//! Slew-rate-limited servo model.

use serde::{Deserialize, Serialize};

use crate::model::JointLimits;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServoSim {
    pub current: f64,
    pub target: f64,
    pub v_max: f64,
}

impl ServoSim {
    pub fn new(current: f64, v_max: f64) -> Self {
        Self {
            current,
            target: current,
            v_max,
        }
    }

    pub fn at_target(&self) -> bool {
        self.current == self.target
    }
}

/// Moves `current` toward `target` by `min(|gap|, v_max * dt)`. Returns the
/// new servo and its velocity (displacement / dt). Within one step of the
/// target the servo lands on it exactly.
pub fn servo_step(s: ServoSim, dt: f64) -> (ServoSim, f64) {
    debug_assert!(dt > 0.0, "dt must be positive");
    let gap = s.target - s.current;
    let reach = s.v_max * dt;
    let next = if gap.abs() <= reach {
        s.target
    } else {
        s.current + reach.copysign(gap)
    };
    let velocity = (next - s.current) / dt;
    (ServoSim { current: next, ..s }, velocity)
}

/// Clamps the target into `limits` before stepping, so `current` stays inside.
pub fn servo_step_limited(s: ServoSim, limits: &JointLimits, dt: f64) -> (ServoSim, f64) {
    let (mut next, _) = servo_step(
        ServoSim {
            target: limits.clamp(s.target),
            ..s
        },
        dt,
    );
    next.current = limits.clamp(next.current);
    let velocity = (next.current - s.current) / dt;
    (next, velocity)
}

/// Ticks needed to close `gap` at `v_max * dt` per tick.
pub fn ticks_to_converge(gap: f64, v_max: f64, dt: f64) -> u64 {
    (gap.abs() / (v_max * dt)).ceil() as u64
}
