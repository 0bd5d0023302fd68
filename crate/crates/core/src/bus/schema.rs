//! Named, versioned structural payload descriptions.
//!
//! A schema id is `name@version`. Payloads are JSON objects; a schema lists the
//! permitted top-level fields and their shapes. Unknown fields are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    Number,
    Integer,
    String,
    Bool,
    Object,
    Array,
    Any,
    Optional(Box<FieldType>),
    /// Object whose values all share one type.
    MapOf(Box<FieldType>),
}

impl FieldType {
    fn matches(&self, v: &Value) -> bool {
        match self {
            FieldType::Number => v.is_number(),
            FieldType::Integer => v.is_u64() || v.is_i64(),
            FieldType::String => v.is_string(),
            FieldType::Bool => v.is_boolean(),
            FieldType::Object => v.is_object(),
            FieldType::Array => v.is_array(),
            FieldType::Any => true,
            FieldType::Optional(inner) => v.is_null() || inner.matches(v),
            FieldType::MapOf(inner) => v
                .as_object()
                .is_some_and(|m| m.values().all(|x| inner.matches(x))),
        }
    }

    fn optional(&self) -> bool {
        matches!(self, FieldType::Optional(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub version: u32,
    pub fields: BTreeMap<String, FieldType>,
}

impl Schema {
    pub fn new(name: &str, version: u32, fields: &[(&str, FieldType)]) -> Self {
        Self {
            name: name.to_owned(),
            version,
            fields: fields
                .iter()
                .map(|(k, t)| ((*k).to_owned(), t.clone()))
                .collect(),
        }
    }

    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }

    /// Returns a description of the first violation, if any.
    pub fn check(&self, payload: &Value) -> Result<(), String> {
        let obj = payload
            .as_object()
            .ok_or_else(|| "payload is not an object".to_owned())?;
        for key in obj.keys() {
            if !self.fields.contains_key(key) {
                return Err(format!("unexpected field `{key}`"));
            }
        }
        for (name, ty) in &self.fields {
            match obj.get(name) {
                None if ty.optional() => {}
                None => return Err(format!("missing field `{name}`")),
                Some(v) if !ty.matches(v) => {
                    return Err(format!("field `{name}` is not {ty:?}"));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Schema ids used by the platform's own interfaces.
pub mod ids {
    pub const JOINT_STATE: &str = "m/JointState@1";
    pub const FACE_STATE: &str = "m/FaceState@1";
    pub const RADAR_ENERGY: &str = "m/RadarEnergy@1";
    pub const TOUCH_CONTACT: &str = "m/TouchContact@1";
    pub const HAPTIC_STATE: &str = "m/HapticState@1";
    pub const SET_JOINT_TARGETS: &str = "m/SetJointTargets@1";
    pub const PLAY_TIMELINE: &str = "m/PlayTimeline@1";
    pub const SPEAK: &str = "m/Speak@1";
    pub const USER_TURN: &str = "m/UserTurn@1";
    pub const PRESENCE_EVENT: &str = "m/PresenceEvent@1";
    pub const TOUCH_GESTURE: &str = "m/TouchGesture@1";
    pub const SYSTEM_EVENT: &str = "m/SystemEvent@1";
    pub const STORY_PLAY: &str = "m/StoryPlay@1";
    pub const STORY_CONTROL: &str = "m/StoryControl@1";
    pub const STORY_EVENT: &str = "m/StoryEvent@1";
    pub const COACH_EVENT: &str = "m/CoachEvent@1";
    pub const SESSION_LOCK: &str = "m/SessionLock@1";
}

/// Every schema the platform's own nodes speak.
pub fn builtin() -> Vec<Schema> {
    use FieldType::*;
    let opt = |t: FieldType| Optional(Box::new(t));
    let map_num = MapOf(Box::new(Number));
    vec![
        Schema::new(
            "m/JointState",
            1,
            &[
                ("t_mono", Integer),
                ("position", map_num.clone()),
                ("velocity", map_num.clone()),
            ],
        ),
        Schema::new("m/FaceState", 1, &[("expression", String)]),
        Schema::new("m/RadarEnergy", 1, &[("energy", Number)]),
        Schema::new("m/TouchContact", 1, &[("pad_id", String), ("pressed", Bool)]),
        Schema::new("m/HapticState", 1, &[("amplitude", Number)]),
        Schema::new("m/SetJointTargets", 1, &[("targets", map_num)]),
        Schema::new(
            "m/PlayTimeline",
            1,
            &[
                ("timeline_id", String),
                ("timeline", opt(Object)),
                ("ramp", opt(Number)),
            ],
        ),
        Schema::new("m/Speak", 1, &[("text", String), ("duration", Number)]),
        Schema::new("m/UserTurn", 1, &[("text", String)]),
        Schema::new(
            "m/PresenceEvent",
            1,
            &[("event", String), ("energy_ema", Number)],
        ),
        Schema::new(
            "m/TouchGesture",
            1,
            &[
                ("pad_id", String),
                ("kind", String),
                ("t", Integer),
                ("contact_duration", opt(Number)),
            ],
        ),
        Schema::new("m/SystemEvent", 1, &[("event", String), ("detail", Any)]),
        Schema::new("m/StoryPlay", 1, &[("script", Object)]),
        Schema::new("m/StoryControl", 1, &[("command", String)]),
        Schema::new("m/StoryEvent", 1, &[("event", String), ("detail", Any)]),
        Schema::new("m/CoachEvent", 1, &[("event", String), ("detail", Any)]),
        Schema::new("m/SessionLock", 1, &[("op", String), ("owner", String)]),
    ]
}
