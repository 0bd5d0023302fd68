use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    RadarEnergy { value: f64 },
    Touch { pad_id: String, pressed: bool },
    UserTurn { text: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub event: ScenarioEvent,
}

/// Timed sensor and user events, sorted by `t` (seconds from sim start).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub events: Vec<TimedEvent>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut prev = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            let bad = |why: &str| SimError::InvalidScenario(format!("event {i}: {why}"));
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(bad("time must be finite and >= 0"));
            }
            if e.t < prev {
                return Err(bad("events must be sorted by t"));
            }
            prev = e.t;
            match &e.event {
                ScenarioEvent::RadarEnergy { value } if !(0.0..=1.0).contains(value) => {
                    return Err(bad("radar energy outside [0, 1]"));
                }
                ScenarioEvent::Touch { pad_id, .. } if pad_id.is_empty() => {
                    return Err(bad("empty pad_id"));
                }
                ScenarioEvent::UserTurn { text } if text.trim().is_empty() => {
                    return Err(bad("empty user turn"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Time of the last event, or zero.
    pub fn end(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_event_kinds() {
        let s = Scenario::from_json(
            r#"{"events": [
                {"t": 0.5, "kind": "radar_energy", "value": 0.9},
                {"t": 1.0, "kind": "touch", "pad_id": "head", "pressed": true},
                {"t": 1.2, "kind": "user_turn", "text": "hello"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(s.events.len(), 3);
        assert_eq!(s.end(), 1.2);
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        let unsorted = r#"{"events": [
            {"t": 2.0, "kind": "radar_energy", "value": 0.1},
            {"t": 1.0, "kind": "radar_energy", "value": 0.1}]}"#;
        assert!(matches!(Scenario::from_json(unsorted), Err(SimError::InvalidScenario(_))));
        let hot = r#"{"events": [{"t": 0, "kind": "radar_energy", "value": 1.5}]}"#;
        assert!(Scenario::from_json(hot).is_err());
        let unknown = r#"{"events": [{"t": 0, "kind": "smell"}]}"#;
        assert!(Scenario::from_json(unknown).is_err());
    }
}
