//! Running timelines and how their outputs combine.
//!
//! Per channel the highest-priority live timeline wins; ties go to the most
//! recently started. A preempting timeline masks every conflicting timeline of
//! lower or equal priority on the channels they share, and for numeric
//! channels the hand-over is a linear mix from the old source to the new one
//! over the ramp.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::timeline::{Channel, Frame, Timeline};
use crate::model::{JointId, JointMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryOutcome {
    /// Ran to its end.
    Finished,
    /// Every channel it drove was taken over by another timeline.
    Displaced,
    Removed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryEvent {
    pub id: EntryId,
    pub timeline_id: String,
    pub outcome: EntryOutcome,
}

#[derive(Clone, Debug)]
struct Entry {
    id: EntryId,
    timeline: Arc<Timeline>,
    start: f64,
    lost: BTreeSet<Channel>,
}

impl Entry {
    fn live_on(&self, ch: Channel) -> bool {
        self.timeline.touches(ch) && !self.lost.contains(&ch)
    }

    fn rank(&self) -> (i32, f64, EntryId) {
        (self.timeline.priority(), self.start, self.id)
    }

    fn end(&self) -> f64 {
        self.start + self.timeline.duration()
    }

    fn value(&self, ch: Channel, t: f64) -> Option<f64> {
        self.timeline.sample_numeric(ch, (t - self.start).max(0.0))
    }
}

#[derive(Clone, Debug)]
enum RampFrom {
    Timeline { timeline: Arc<Timeline>, start: f64 },
    Constant(f64),
}

#[derive(Clone, Debug)]
struct Ramp {
    from: RampFrom,
    t0: f64,
    duration: f64,
    to: EntryId,
}

impl Ramp {
    fn source(&self, ch: Channel, t: f64) -> f64 {
        match &self.from {
            RampFrom::Constant(v) => *v,
            RampFrom::Timeline { timeline, start } => timeline
                .sample_numeric(ch, (t - start).max(0.0))
                .expect("ramp source drives this channel"),
        }
    }

    fn weight(&self, t: f64) -> f64 {
        ((t - self.t0) / self.duration).clamp(0.0, 1.0)
    }
}

const NUMERIC_CHANNELS: [Channel; 6] = [
    Channel::Joint(JointId::BaseYaw),
    Channel::Joint(JointId::HeadPitch),
    Channel::Joint(JointId::HeadYaw),
    Channel::Joint(JointId::LeftArm),
    Channel::Joint(JointId::RightArm),
    Channel::Haptic,
];

#[derive(Clone, Debug)]
pub struct ActiveSet {
    entries: Vec<Entry>,
    ramps: BTreeMap<Channel, Ramp>,
    held_joints: JointMap,
    held_haptic: f64,
    held_face: String,
    next_id: u64,
    events: Vec<EntryEvent>,
}

impl ActiveSet {
    /// Idle set holding `rest` on every joint, zero haptic output and `face`.
    pub fn new(rest: JointMap, face: &str) -> Self {
        Self {
            entries: Vec::new(),
            ramps: BTreeMap::new(),
            held_joints: rest,
            held_haptic: 0.0,
            held_face: face.to_owned(),
            next_id: 1,
            events: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: EntryId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn running(&self) -> Vec<(EntryId, String)> {
        self.entries
            .iter()
            .map(|e| (e.id, e.timeline.id().to_owned()))
            .collect()
    }

    /// Lifecycle events since the last call.
    pub fn take_events(&mut self) -> Vec<EntryEvent> {
        std::mem::take(&mut self.events)
    }

    /// Sets the value a joint falls back to when no timeline drives it.
    pub fn set_held(&mut self, joint: JointId, value: f64) {
        self.held_joints.insert(joint, value);
    }

    pub fn held(&self, joint: JointId) -> f64 {
        self.held_joints.get(&joint).copied().unwrap_or(0.0)
    }

    fn winner(&self, ch: Channel) -> Option<&Entry> {
        self.entries
            .iter()
            .filter(|e| e.live_on(ch))
            .max_by(|a, b| a.rank().partial_cmp(&b.rank()).expect("finite start times"))
    }

    fn held_numeric(&self, ch: Channel) -> f64 {
        match ch {
            Channel::Joint(j) => self.held(j),
            Channel::Haptic => self.held_haptic,
            Channel::Face => unreachable!("face is not numeric"),
        }
    }

    fn numeric(&self, ch: Channel, t: f64) -> f64 {
        let Some(w) = self.winner(ch) else {
            return self.held_numeric(ch);
        };
        let new = w.value(ch, t).expect("winner drives the channel");
        match self.ramps.get(&ch) {
            Some(r) if r.to == w.id && t < r.t0 + r.duration => {
                let a = r.weight(t);
                (1.0 - a) * r.source(ch, t) + a * new
            }
            _ => new,
        }
    }

    /// Output at time `t` (seconds on the engine's timeline). Pure.
    pub fn blend(&self, t: f64) -> Frame {
        let mut frame = Frame {
            joints: JointMap::new(),
            face: None,
            haptic: None,
        };
        for ch in NUMERIC_CHANNELS {
            let v = self.numeric(ch, t);
            match ch {
                Channel::Joint(j) => {
                    frame.joints.insert(j, v);
                }
                Channel::Haptic => frame.haptic = Some(v),
                Channel::Face => {}
            }
        }
        frame.face = Some(match self.winner(Channel::Face) {
            Some(w) => w
                .timeline
                .sample_face((t - w.start).max(0.0))
                .expect("winner drives the face")
                .to_owned(),
            None => self.held_face.clone(),
        });
        frame
    }

    /// Starts `timeline` at `at`, masking conflicting timelines of lower or
    /// equal priority. `ramp` seconds of crossfade apply where a running
    /// timeline is displaced; an idle channel is taken over directly.
    pub fn preempt(&mut self, timeline: Arc<Timeline>, at: f64, ramp: f64) -> EntryId {
        let id = EntryId(self.next_id);
        self.next_id += 1;
        let prio = timeline.priority();
        for ch in timeline.channels() {
            let winner = self.winner(ch).map(|w| (w.id, w.timeline.priority()));
            if let Some((wid, wprio)) = winner {
                if wprio <= prio && ramp > 0.0 && ch != Channel::Face {
                    let from = match self.ramps.get(&ch) {
                        Some(r) if r.to == wid && at < r.t0 + r.duration => {
                            RampFrom::Constant(self.numeric(ch, at))
                        }
                        _ => {
                            let w = self.entries.iter().find(|e| e.id == wid).expect("winner exists");
                            RampFrom::Timeline {
                                timeline: w.timeline.clone(),
                                start: w.start,
                            }
                        }
                    };
                    self.ramps.insert(
                        ch,
                        Ramp {
                            from,
                            t0: at,
                            duration: ramp,
                            to: id,
                        },
                    );
                } else {
                    self.ramps.remove(&ch);
                }
            }
            for e in self.entries.iter_mut() {
                if e.live_on(ch) && e.timeline.priority() <= prio {
                    e.lost.insert(ch);
                }
            }
        }
        self.retire_displaced();
        self.entries.push(Entry {
            id,
            timeline,
            start: at,
            lost: BTreeSet::new(),
        });
        id
    }

    fn retire_displaced(&mut self) {
        let (gone, keep): (Vec<Entry>, Vec<Entry>) = std::mem::take(&mut self.entries)
            .into_iter()
            .partition(|e| e.timeline.channels().iter().all(|c| e.lost.contains(c)));
        self.entries = keep;
        for e in gone {
            self.events.push(EntryEvent {
                id: e.id,
                timeline_id: e.timeline.id().to_owned(),
                outcome: EntryOutcome::Displaced,
            });
        }
    }

    fn hold_frame(&mut self, frame: &Frame) {
        for (j, v) in &frame.joints {
            self.held_joints.insert(*j, *v);
        }
        if let Some(h) = frame.haptic {
            self.held_haptic = h;
        }
        if let Some(f) = &frame.face {
            self.held_face = f.clone();
        }
    }

    /// Advances bookkeeping to `t`: records the output as the held value and
    /// retires timelines that have reached their end. Returns the output at `t`.
    pub fn commit(&mut self, t: f64) -> Frame {
        let frame = self.blend(t);
        self.hold_frame(&frame);
        let (done, keep): (Vec<Entry>, Vec<Entry>) = std::mem::take(&mut self.entries)
            .into_iter()
            .partition(|e| e.end() <= t);
        self.entries = keep;
        for e in done {
            self.events.push(EntryEvent {
                id: e.id,
                timeline_id: e.timeline.id().to_owned(),
                outcome: EntryOutcome::Finished,
            });
        }
        let live: BTreeSet<EntryId> = self.entries.iter().map(|e| e.id).collect();
        self.ramps
            .retain(|_, r| live.contains(&r.to) && t < r.t0 + r.duration);
        frame
    }

    /// Stops a timeline early, holding its current output.
    pub fn remove(&mut self, id: EntryId, t: f64) -> bool {
        if !self.contains(id) {
            return false;
        }
        let frame = self.blend(t);
        self.hold_frame(&frame);
        let e = {
            let idx = self.entries.iter().position(|e| e.id == id).expect("checked");
            self.entries.remove(idx)
        };
        self.ramps.retain(|_, r| r.to != id);
        self.events.push(EntryEvent {
            id,
            timeline_id: e.timeline.id().to_owned(),
            outcome: EntryOutcome::Removed,
        });
        true
    }
}
