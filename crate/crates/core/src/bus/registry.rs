//! Interface registry snapshots and equivalence diffing.
//!
//! Two registries are equivalent when their `(path, kind, schema_id)` sets are
//! equal. Provider ids are kept for diagnostics but never compared, and they are
//! left out of the canonical export so that two equivalent providers export
//! byte-identical documents.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{InterfaceKind, InterfaceName};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub interface: InterfaceName,
    pub provider: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InterfaceRegistry {
    entries: BTreeSet<RegistryEntry>,
}

#[derive(Serialize, Deserialize)]
struct ExportDoc {
    interfaces: Vec<ExportEntry>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
struct ExportEntry {
    path: String,
    kind: InterfaceKind,
    schema_id: String,
}

impl InterfaceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, interface: InterfaceName, provider: &str) {
        self.entries.insert(RegistryEntry {
            interface,
            provider: provider.to_owned(),
        });
    }

    pub fn remove_path(&mut self, path: &str, kind: InterfaceKind) -> bool {
        let before = self.entries.len();
        self.entries
            .retain(|e| !(e.interface.path == path && e.interface.kind == kind));
        before != self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.iter()
    }

    pub fn interfaces(&self) -> BTreeSet<InterfaceName> {
        self.entries.iter().map(|e| e.interface.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.interfaces().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn filter_provider(&self, provider: &str) -> InterfaceRegistry {
        InterfaceRegistry {
            entries: self
                .entries
                .iter()
                .filter(|e| e.provider == provider)
                .cloned()
                .collect(),
        }
    }

    /// Canonical JSON: one object per interface, sorted by path then kind,
    /// pretty-printed with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut interfaces: Vec<ExportEntry> = self
            .interfaces()
            .into_iter()
            .map(|i| ExportEntry {
                path: i.path,
                kind: i.kind,
                schema_id: i.schema_id,
            })
            .collect();
        interfaces.sort();
        interfaces.dedup();
        let mut s = serde_json::to_string_pretty(&ExportDoc { interfaces })
            .expect("registry export is always serializable");
        s.push('\n');
        s
    }

    pub fn from_canonical_json(text: &str) -> Result<Self, serde_json::Error> {
        let doc: ExportDoc = serde_json::from_str(text)?;
        let mut reg = InterfaceRegistry::new();
        for e in doc.interfaces {
            reg.insert(
                InterfaceName {
                    path: e.path,
                    kind: e.kind,
                    schema_id: e.schema_id,
                },
                "import",
            );
        }
        Ok(reg)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "discrepancy", rename_all = "snake_case")]
pub enum Discrepancy {
    /// Present in the left registry, absent from the right.
    Missing { path: String, kind: InterfaceKind, schema_id: String },
    /// Present in the right registry, absent from the left.
    Extra { path: String, kind: InterfaceKind, schema_id: String },
    SchemaMismatch {
        path: String,
        kind: InterfaceKind,
        left: String,
        right: String,
    },
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discrepancy::Missing { path, kind, schema_id } => {
                write!(f, "missing: {path} ({kind}, {schema_id})")
            }
            Discrepancy::Extra { path, kind, schema_id } => {
                write!(f, "extra: {path} ({kind}, {schema_id})")
            }
            Discrepancy::SchemaMismatch { path, kind, left, right } => {
                write!(f, "schema mismatch: {path} ({kind}): {left} vs {right}")
            }
        }
    }
}

/// Lists how `b` differs from `a`. Empty iff the registries are equivalent.
pub fn registry_diff(a: &InterfaceRegistry, b: &InterfaceRegistry) -> Vec<Discrepancy> {
    let index = |r: &InterfaceRegistry| {
        let mut m: BTreeMap<(String, InterfaceKind), BTreeSet<String>> = BTreeMap::new();
        for i in r.interfaces() {
            m.entry((i.path, i.kind)).or_default().insert(i.schema_id);
        }
        m
    };
    let left = index(a);
    let right = index(b);
    let mut out = Vec::new();
    for ((path, kind), ls) in &left {
        match right.get(&(path.clone(), *kind)) {
            None => out.extend(ls.iter().map(|s| Discrepancy::Missing {
                path: path.clone(),
                kind: *kind,
                schema_id: s.clone(),
            })),
            Some(rs) if rs != ls => out.push(Discrepancy::SchemaMismatch {
                path: path.clone(),
                kind: *kind,
                left: ls.iter().cloned().collect::<Vec<_>>().join(","),
                right: rs.iter().cloned().collect::<Vec<_>>().join(","),
            }),
            Some(_) => {}
        }
    }
    for ((path, kind), rs) in &right {
        if !left.contains_key(&(path.clone(), *kind)) {
            out.extend(rs.iter().map(|s| Discrepancy::Extra {
                path: path.clone(),
                kind: *kind,
                schema_id: s.clone(),
            }));
        }
    }
    out.sort();
    out
}
