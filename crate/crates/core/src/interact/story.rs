//! Story scripts and the pure delivery state machine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InteractError;
use crate::expression::{CueSchedule, Library};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryChunk {
    pub text: String,
    /// Utterance length, seconds.
    pub duration: f64,
    #[serde(default)]
    pub cues: CueSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryScript {
    pub id: String,
    pub chunks: Vec<StoryChunk>,
}

impl StoryScript {
    pub fn from_json(text: &str) -> Result<Self, InteractError> {
        serde_json::from_str(text).map_err(|e| InteractError::InvalidScript(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, InteractError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InteractError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks structure, cue ranges and, given a library, that every cue
    /// names a known timeline.
    pub fn validate(&self, library: Option<&Library>) -> Result<(), InteractError> {
        let bad = |m: String| Err(InteractError::InvalidScript(m));
        if self.chunks.is_empty() {
            return bad(format!("story {} has no chunks", self.id));
        }
        for (i, c) in self.chunks.iter().enumerate() {
            if !(c.duration.is_finite() && c.duration > 0.0) {
                return bad(format!("chunk {i}: duration {} must be > 0", c.duration));
            }
            if c.text.trim().is_empty() {
                return bad(format!("chunk {i}: empty narration"));
            }
            c.cues
                .validate(c.duration)
                .map_err(|e| InteractError::InvalidScript(format!("chunk {i}: {e}")))?;
            if let Some(lib) = library {
                if let Some(cue) = c.cues.cues.iter().find(|q| !lib.contains(&q.timeline_id)) {
                    return bad(format!("chunk {i}: unknown timeline {:?}", cue.timeline_id));
                }
            }
        }
        Ok(())
    }

    pub fn cue_count(&self) -> usize {
        self.chunks.iter().map(|c| c.cues.cues.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum StoryPhase {
    Idle,
    Narrating { chunk: usize },
    Paused { chunk: usize },
    Complete,
    Aborted { cause: String },
}

impl StoryPhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, StoryPhase::Complete | StoryPhase::Aborted { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoryInput {
    Start,
    SpeakSucceeded,
    SpeakFailed(String),
    Pause,
    Resume,
    Abort(String),
}

/// Side effects the driver must carry out, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoryCommand {
    /// Start the utterance and cues of chunk `i`.
    StartChunk(usize),
    /// Cancel the running utterance and every pending cue.
    StopChunk,
    Finish(StoryPhase),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejected {
    pub phase: StoryPhase,
    pub input: StoryInput,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoryMachine {
    chunks: usize,
    phase: StoryPhase,
}

impl StoryMachine {
    pub fn new(chunks: usize) -> Self {
        assert!(chunks > 0, "a story has at least one chunk");
        Self {
            chunks,
            phase: StoryPhase::Idle,
        }
    }

    pub fn phase(&self) -> &StoryPhase {
        &self.phase
    }

    pub fn chunks(&self) -> usize {
        self.chunks
    }

    /// Applies `input`; an input that is not legal in the current phase is
    /// rejected and leaves the machine unchanged.
    pub fn handle(&mut self, input: StoryInput) -> Result<Vec<StoryCommand>, Rejected> {
        use StoryCommand::*;
        use StoryPhase::*;
        let (next, cmds) = match (&self.phase, &input) {
            (Idle, StoryInput::Start) => (Narrating { chunk: 0 }, vec![StartChunk(0)]),
            (Narrating { chunk }, StoryInput::SpeakSucceeded) => {
                if chunk + 1 < self.chunks {
                    (Narrating { chunk: chunk + 1 }, vec![StartChunk(chunk + 1)])
                } else {
                    (Complete, vec![Finish(Complete)])
                }
            }
            (Narrating { .. }, StoryInput::SpeakFailed(why)) => {
                let a = Aborted { cause: format!("SpeakFailed: {why}") };
                (a.clone(), vec![StopChunk, Finish(a)])
            }
            (Narrating { chunk }, StoryInput::Pause) => (Paused { chunk: *chunk }, vec![StopChunk]),
            (Paused { chunk }, StoryInput::Resume) => (Narrating { chunk: *chunk }, vec![StartChunk(*chunk)]),
            (Narrating { .. } | Paused { .. }, StoryInput::Abort(why)) => {
                let a = Aborted { cause: why.clone() };
                (a.clone(), vec![StopChunk, Finish(a)])
            }
            _ => {
                return Err(Rejected {
                    phase: self.phase.clone(),
                    input,
                })
            }
        };
        self.phase = next;
        Ok(cmds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, VecDeque};

    /// Legal transitions written out independently of the machine.
    fn legal(n: usize, from: &StoryPhase, to: &StoryPhase) -> bool {
        use StoryPhase::*;
        match (from, to) {
            (Idle, Narrating { chunk: 0 }) => true,
            (Narrating { chunk: i }, Narrating { chunk: j }) => *j == i + 1 && *j < n,
            (Narrating { .. }, Paused { .. }) | (Paused { .. }, Narrating { .. }) => {
                from_chunk(from) == from_chunk(to)
            }
            (Narrating { .. } | Paused { .. }, Aborted { .. }) => true,
            (Narrating { chunk }, Complete) => *chunk == n - 1,
            _ => false,
        }
    }

    fn from_chunk(p: &StoryPhase) -> Option<usize> {
        match p {
            StoryPhase::Narrating { chunk } | StoryPhase::Paused { chunk } => Some(*chunk),
            _ => None,
        }
    }

    fn inputs() -> Vec<StoryInput> {
        vec![
            StoryInput::Start,
            StoryInput::SpeakSucceeded,
            StoryInput::SpeakFailed("x".into()),
            StoryInput::Pause,
            StoryInput::Resume,
            StoryInput::Abort("stop".into()),
        ]
    }

    #[test]
    fn exhaustive_model_check_three_chunks() {
        let n = 3;
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([StoryMachine::new(n)]);
        while let Some(m) = queue.pop_front() {
            if !seen.insert(format!("{:?}", m.phase())) {
                continue;
            }
            for input in inputs() {
                let mut next = m.clone();
                match next.handle(input.clone()) {
                    Ok(cmds) => {
                        assert!(legal(n, m.phase(), next.phase()), "{:?} --{input:?}--> {:?}", m.phase(), next.phase());
                        if let StoryPhase::Narrating { chunk } = next.phase() {
                            assert_eq!(cmds.last(), Some(&StoryCommand::StartChunk(*chunk)));
                        }
                        if next.phase().is_terminal() {
                            assert_eq!(cmds.last(), Some(&StoryCommand::Finish(next.phase().clone())));
                        }
                        queue.push_back(next);
                    }
                    Err(r) => {
                        assert_eq!(&r.phase, m.phase());
                        assert_eq!(next, m, "rejected input must not change state");
                    }
                }
            }
        }
        // idle, 3 narrating, 3 paused, complete, and aborted (causes differ).
        assert!(seen.len() >= 9);
    }

    #[test]
    fn success_path_visits_every_chunk_once() {
        let mut m = StoryMachine::new(3);
        let mut started = Vec::new();
        let mut step = |m: &mut StoryMachine, i| {
            for c in m.handle(i).unwrap() {
                if let StoryCommand::StartChunk(k) = c {
                    started.push(k);
                }
            }
        };
        step(&mut m, StoryInput::Start);
        for _ in 0..3 {
            step(&mut m, StoryInput::SpeakSucceeded);
        }
        assert_eq!(started, [0, 1, 2]);
        assert_eq!(m.phase(), &StoryPhase::Complete);
    }

    #[test]
    fn bundled_sample_story_is_valid() {
        let desc = crate::model::RobotDescription::builtin();
        let lib = Library::builtin(&desc);
        let s = StoryScript::from_json(include_str!("../../assets/stories/lighthouse.json")).unwrap();
        s.validate(Some(&lib)).unwrap();
        assert!(s.chunks.len() >= 3);
        assert!(s.cue_count() >= 5);
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        let empty = StoryScript { id: "e".into(), chunks: vec![] };
        assert!(empty.validate(None).is_err());
        let s = StoryScript::from_json(
            r#"{"id":"x","chunks":[{"text":"a","duration":1.0,"cues":[{"offset":1.6,"timeline_id":"nod"}]}]}"#,
        )
        .unwrap();
        assert!(s.validate(None).is_err());
    }
}
