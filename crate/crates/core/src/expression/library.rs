//! Gesture library: a manifest mapping gesture names to timeline files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::timeline::Timeline;
use super::ExpressionError;
use crate::model::RobotDescription;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Gesture name -> timeline file, relative to the manifest.
    pub gestures: BTreeMap<String, String>,
}

const BUILTIN_MANIFEST: &str = include_str!("../../assets/library/manifest.json");
const BUILTIN_FILES: &[(&str, &str)] = &[
    ("arms_up.json", include_str!("../../assets/library/arms_up.json")),
    ("beat.json", include_str!("../../assets/library/beat.json")),
    ("celebrate.json", include_str!("../../assets/library/celebrate.json")),
    ("head_tilt.json", include_str!("../../assets/library/head_tilt.json")),
    ("listen.json", include_str!("../../assets/library/listen.json")),
    ("look_around.json", include_str!("../../assets/library/look_around.json")),
    ("nod.json", include_str!("../../assets/library/nod.json")),
    ("shrug.json", include_str!("../../assets/library/shrug.json")),
    ("wave.json", include_str!("../../assets/library/wave.json")),
    ("wonder.json", include_str!("../../assets/library/wonder.json")),
];

#[derive(Clone, Debug, Default)]
pub struct Library {
    timelines: BTreeMap<String, Arc<Timeline>>,
    faces: Vec<String>,
}

impl Library {
    pub fn builtin(desc: &RobotDescription) -> Self {
        Self::from_manifest(BUILTIN_MANIFEST, desc, |file| {
            BUILTIN_FILES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, text)| (*text).to_owned())
                .ok_or_else(|| ExpressionError::Library(format!("{file} not bundled")))
        })
        .expect("bundled library is valid")
    }

    /// Loads `manifest.json` from `dir` together with the timelines it names.
    pub fn load(dir: &Path, desc: &RobotDescription) -> Result<Self, ExpressionError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| ExpressionError::Library(format!("{}: {e}", p.display())))
        };
        let manifest = read(&dir.join("manifest.json"))?;
        Self::from_manifest(&manifest, desc, |file| read(&dir.join(file)))
    }

    fn from_manifest<F>(manifest: &str, desc: &RobotDescription, read: F) -> Result<Self, ExpressionError>
    where
        F: Fn(&str) -> Result<String, ExpressionError>,
    {
        let manifest: Manifest =
            serde_json::from_str(manifest).map_err(|e| ExpressionError::Library(e.to_string()))?;
        let mut timelines = BTreeMap::new();
        for (name, file) in &manifest.gestures {
            let tl = Timeline::from_json(&read(file)?, desc)?;
            if tl.id() != name {
                return Err(ExpressionError::Library(format!(
                    "{file} declares id {} but the manifest names it {name}",
                    tl.id()
                )));
            }
            timelines.insert(name.clone(), Arc::new(tl));
        }
        Ok(Self {
            timelines,
            faces: desc.display.expressions.clone(),
        })
    }

    pub fn get(&self, gesture: &str) -> Option<Arc<Timeline>> {
        self.timelines.get(gesture).cloned()
    }

    pub fn contains(&self, gesture: &str) -> bool {
        self.timelines.contains_key(gesture)
    }

    pub fn has_face(&self, face: &str) -> bool {
        self.faces.iter().any(|f| f == face)
    }

    pub fn gestures(&self) -> impl Iterator<Item = &str> {
        self.timelines.keys().map(String::as_str)
    }

    pub fn faces(&self) -> &[String] {
        &self.faces
    }

    pub fn insert(&mut self, timeline: Timeline) {
        self.timelines
            .insert(timeline.id().to_owned(), Arc::new(timeline));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_library_loads_every_manifest_entry() {
        let desc = RobotDescription::builtin();
        let lib = Library::builtin(&desc);
        let manifest: Manifest = serde_json::from_str(BUILTIN_MANIFEST).unwrap();
        assert_eq!(lib.gestures().count(), manifest.gestures.len());
        assert!(lib.contains("nod"));
        assert!(lib.has_face("joy"));
        assert!(!lib.contains("moonwalk"));
    }

    #[test]
    fn load_from_directory_matches_builtin() {
        let desc = RobotDescription::builtin();
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/library");
        let lib = Library::load(&dir, &desc).unwrap();
        let builtin = Library::builtin(&desc);
        assert!(lib.gestures().eq(builtin.gestures()));
    }
}
