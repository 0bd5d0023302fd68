use std::fmt;

use serde::{Deserialize, Serialize};

use super::BusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Topic,
    Service,
    Action,
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfaceKind::Topic => "topic",
            InterfaceKind::Service => "service",
            InterfaceKind::Action => "action",
        })
    }
}

/// A named, typed endpoint on the bus, e.g. `/m/joint_states` (topic,
/// `m/JointState@1`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InterfaceName {
    pub path: String,
    pub kind: InterfaceKind,
    pub schema_id: String,
}

impl InterfaceName {
    pub fn new(path: &str, kind: InterfaceKind, schema_id: &str) -> Result<Self, BusError> {
        validate_path(path)?;
        Ok(Self {
            path: path.to_owned(),
            kind,
            schema_id: schema_id.to_owned(),
        })
    }

    pub fn topic(path: &str, schema_id: &str) -> Result<Self, BusError> {
        Self::new(path, InterfaceKind::Topic, schema_id)
    }

    pub fn service(path: &str, schema_id: &str) -> Result<Self, BusError> {
        Self::new(path, InterfaceKind::Service, schema_id)
    }

    pub fn action(path: &str, schema_id: &str) -> Result<Self, BusError> {
        Self::new(path, InterfaceKind::Action, schema_id)
    }

    pub fn key(&self) -> (String, InterfaceKind) {
        (self.path.clone(), self.kind)
    }
}

impl fmt::Display for InterfaceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}, {})", self.path, self.kind, self.schema_id)
    }
}

/// A path is `/seg(/seg)*` with every segment in `[a-z0-9_]+`.
pub fn validate_path(path: &str) -> Result<(), BusError> {
    let invalid = || BusError::InvalidInterfaceName(path.to_owned());
    let rest = path.strip_prefix('/').ok_or_else(invalid)?;
    if rest.is_empty() {
        return Err(invalid());
    }
    for seg in rest.split('/') {
        if seg.is_empty()
            || !seg
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        {
            return Err(invalid());
        }
    }
    Ok(())
}
