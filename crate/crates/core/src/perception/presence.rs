use serde::{Deserialize, Serialize};

use crate::clock::Nanos;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresenceConfig {
    /// EMA weight of the newest sample.
    pub alpha: f64,
    pub t_hi: f64,
    pub t_lo: f64,
    /// Seconds the EMA must stay below `t_lo` before `left`.
    pub dwell: f64,
}

impl Default for PresenceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            t_hi: 0.6,
            t_lo: 0.3,
            dwell: 2.0,
        }
    }
}

impl PresenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(0.0 <= self.t_lo && self.t_lo < self.t_hi && self.t_hi <= 1.0) {
            return Err(format!("need 0 <= t_lo < t_hi <= 1, got {} / {}", self.t_lo, self.t_hi));
        }
        if !(self.dwell.is_finite() && self.dwell >= 0.0) {
            return Err(format!("dwell {} must be >= 0", self.dwell));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceEvent {
    Entered,
    Left,
}

impl PresenceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            PresenceEvent::Entered => "entered",
            PresenceEvent::Left => "left",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PresenceState {
    pub present: bool,
    /// Instant of the last transition.
    pub since: Nanos,
    pub energy_ema: f64,
    /// While present, the first sample of the current below-`t_lo` run.
    pub below_since: Option<Nanos>,
}

/// Feeds one energy sample. `energy` is clamped into [0, 1].
pub fn presence_update(
    cfg: &PresenceConfig,
    state: PresenceState,
    energy: f64,
    t: Nanos,
) -> (PresenceState, Option<PresenceEvent>) {
    let e = if energy.is_nan() { 0.0 } else { energy.clamp(0.0, 1.0) };
    let ema = cfg.alpha * e + (1.0 - cfg.alpha) * state.energy_ema;
    let mut next = PresenceState { energy_ema: ema, ..state };
    if !state.present {
        if ema > cfg.t_hi {
            next.present = true;
            next.since = t;
            next.below_since = None;
            return (next, Some(PresenceEvent::Entered));
        }
        return (next, None);
    }
    if ema >= cfg.t_lo {
        next.below_since = None;
        return (next, None);
    }
    let below = *next.below_since.get_or_insert(t);
    if t.saturating_sub(below).as_secs_f64() >= cfg.dwell {
        next.present = false;
        next.since = t;
        next.below_since = None;
        return (next, Some(PresenceEvent::Left));
    }
    (next, None)
}
