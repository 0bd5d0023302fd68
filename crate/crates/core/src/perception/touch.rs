use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Nanos;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TouchConfig {
    /// Contact length at which a hold starts, seconds.
    pub t_hold: f64,
    /// Longest contact still reported as a tap. `None` means `t_hold`, so
    /// every contact maps to a tap or a hold. A smaller value opens a dead
    /// zone in which contacts emit nothing.
    pub tap_max: Option<f64>,
}

impl Default for TouchConfig {
    fn default() -> Self {
        Self {
            t_hold: 1.0,
            tap_max: None,
        }
    }
}

impl TouchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_hold.is_finite() && self.t_hold > 0.0) {
            return Err(format!("t_hold {} must be > 0", self.t_hold));
        }
        if let Some(m) = self.tap_max {
            if !(m > 0.0 && m <= self.t_hold) {
                return Err(format!("tap_max {m} must be in (0, t_hold]"));
            }
        }
        Ok(())
    }

    fn hold_after(&self) -> Nanos {
        Nanos::from_secs_f64(self.t_hold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouchKind {
    Tap,
    HoldStart,
    HoldEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    pub pad_id: String,
    pub kind: TouchKind,
    pub t: Nanos,
    /// Seconds; present on `tap` and `hold_end`.
    pub contact_duration: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TouchError {
    #[error("pad {pad_id}: {detail}")]
    ProtocolViolation { pad_id: String, detail: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Contact {
    pressed_at: Nanos,
    holding: bool,
}

/// Tap/hold classifier over press/release edges, one state per pad.
#[derive(Clone, Debug, Default)]
pub struct TouchClassifier {
    cfg: TouchConfig,
    pads: BTreeMap<String, Contact>,
}

impl TouchClassifier {
    pub fn new(cfg: TouchConfig) -> Self {
        Self {
            cfg,
            pads: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &TouchConfig {
        &self.cfg
    }

    /// Emits `hold_start` for every contact that has reached `t_hold` by `t`,
    /// stamped at the exact threshold instant.
    pub fn poll(&mut self, t: Nanos) -> Vec<TouchEvent> {
        let hold = self.cfg.hold_after();
        let mut out = Vec::new();
        for (pad, c) in self.pads.iter_mut() {
            if !c.holding && c.pressed_at + hold <= t {
                c.holding = true;
                out.push(TouchEvent {
                    pad_id: pad.clone(),
                    kind: TouchKind::HoldStart,
                    t: c.pressed_at + hold,
                    contact_duration: None,
                });
            }
        }
        out
    }

    /// Earliest pending hold threshold.
    pub fn next_deadline(&self) -> Option<Nanos> {
        let hold = self.cfg.hold_after();
        self.pads
            .values()
            .filter(|c| !c.holding)
            .map(|c| c.pressed_at + hold)
            .min()
    }

    /// Feeds one edge. A release may produce a `hold_start` and `hold_end`
    /// together when no poll happened in between.
    pub fn touch_update(&mut self, pad_id: &str, pressed: bool, t: Nanos) -> Result<Vec<TouchEvent>, TouchError> {
        let violation = |detail| TouchError::ProtocolViolation {
            pad_id: pad_id.to_owned(),
            detail,
        };
        if pressed {
            if self.pads.contains_key(pad_id) {
                return Err(violation("pressed twice without release"));
            }
            self.pads.insert(
                pad_id.to_owned(),
                Contact {
                    pressed_at: t,
                    holding: false,
                },
            );
            return Ok(Vec::new());
        }
        let Some(c) = self.pads.get(pad_id).copied() else {
            return Err(violation("released while not pressed"));
        };
        let mut out: Vec<TouchEvent> = self
            .poll(t)
            .into_iter()
            .filter(|e| e.pad_id == pad_id)
            .collect();
        self.pads.remove(pad_id);
        let held = t.saturating_sub(c.pressed_at);
        let dur = held.as_secs_f64();
        if c.holding || held >= self.cfg.hold_after() {
            out.push(TouchEvent {
                pad_id: pad_id.to_owned(),
                kind: TouchKind::HoldEnd,
                t,
                contact_duration: Some(dur),
            });
        } else if dur <= self.cfg.tap_max.unwrap_or(self.cfg.t_hold) {
            out.push(TouchEvent {
                pad_id: pad_id.to_owned(),
                kind: TouchKind::Tap,
                t,
                contact_duration: Some(dur),
            });
        }
        Ok(out)
    }
}
