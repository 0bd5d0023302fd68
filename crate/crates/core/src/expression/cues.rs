//! Audio-relative cue scheduling.
//!
//! Cues are offsets from an utterance's start. The scheduler is polled by the
//! executor that owns it, and callbacks only ever run inside `poll`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExpressionError;
use crate::clock::Nanos;

/// Cues may trail the utterance by this much, seconds.
pub const CUE_GRACE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub offset: f64,
    pub timeline_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CueSchedule {
    pub cues: Vec<Cue>,
}

impl CueSchedule {
    pub fn new(cues: Vec<Cue>) -> Self {
        Self { cues }
    }

    pub fn validate(&self, utterance_duration: f64) -> Result<(), ExpressionError> {
        for (i, c) in self.cues.iter().enumerate() {
            if !c.offset.is_finite() || c.offset < 0.0 || c.offset > utterance_duration + CUE_GRACE {
                return Err(ExpressionError::CueOutOfRange {
                    index: i,
                    offset: c.offset,
                    limit: utterance_duration + CUE_GRACE,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CueGroupId(pub u64);

#[derive(Clone, Debug, PartialEq)]
pub struct CueDispatch {
    pub group: CueGroupId,
    pub index: usize,
    pub timeline_id: String,
    pub offset: f64,
    pub due: Nanos,
    /// Clock time at which the dispatch actually ran.
    pub fired_at: Nanos,
}

type Callback = Box<dyn FnMut(&CueDispatch) + Send>;

struct Group {
    callback: Callback,
}

#[derive(Default)]
pub struct CueScheduler {
    /// (due, insertion seq) -> (group, cue index, cue)
    pending: BTreeMap<(Nanos, u64), (CueGroupId, usize, Cue)>,
    groups: BTreeMap<CueGroupId, Group>,
    next_group: u64,
    next_seq: u64,
}

impl std::fmt::Debug for CueScheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CueScheduler")
            .field("pending", &self.pending.len())
            .field("groups", &self.groups.len())
            .finish()
    }
}

impl CueScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules every cue at `utterance_start + offset`. Returns a handle that
    /// cancels the whole group.
    pub fn schedule<F>(&mut self, cs: &CueSchedule, utterance_start: Nanos, dispatch: F) -> CueGroupId
    where
        F: FnMut(&CueDispatch) + Send + 'static,
    {
        let group = CueGroupId(self.next_group);
        self.next_group += 1;
        for (i, cue) in cs.cues.iter().enumerate() {
            let due = utterance_start + Nanos::from_secs_f64(cue.offset);
            self.pending
                .insert((due, self.next_seq), (group, i, cue.clone()));
            self.next_seq += 1;
        }
        self.groups.insert(
            group,
            Group {
                callback: Box::new(dispatch),
            },
        );
        group
    }

    /// Drops every not-yet-dispatched cue of `group`; returns how many.
    pub fn cancel_group(&mut self, group: CueGroupId) -> usize {
        let before = self.pending.len();
        self.pending.retain(|_, (g, _, _)| *g != group);
        self.groups.remove(&group);
        before - self.pending.len()
    }

    pub fn cancel_all(&mut self) -> usize {
        let n = self.pending.len();
        self.pending.clear();
        self.groups.clear();
        n
    }

    /// True while `group` still has undispatched cues.
    pub fn has_group(&self, group: CueGroupId) -> bool {
        self.pending.values().any(|(g, _, _)| *g == group)
    }

    pub fn next_due(&self) -> Option<Nanos> {
        self.pending.keys().next().map(|(t, _)| *t)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Fires every cue due at or before `now`, in due order.
    pub fn poll(&mut self, now: Nanos) -> Vec<CueDispatch> {
        let mut fired = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let ((due, _), (group, index, cue)) = entry.remove_entry();
            let d = CueDispatch {
                group,
                index,
                timeline_id: cue.timeline_id,
                offset: cue.offset,
                due,
                fired_at: now,
            };
            if let Some(g) = self.groups.get_mut(&group) {
                (g.callback)(&d);
            }
            fired.push(d);
        }
        // Forget groups with nothing left to fire.
        let live: std::collections::BTreeSet<CueGroupId> =
            self.pending.values().map(|(g, _, _)| *g).collect();
        self.groups.retain(|g, _| live.contains(g));
        fired
    }
}
