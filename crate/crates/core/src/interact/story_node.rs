//! Story delivery node: serves `/m/story/play` and `/m/story/control` and
//! drives a `StoryMachine` against the speech and timeline actions.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::{json, Value};

use super::story::{StoryCommand, StoryInput, StoryMachine, StoryPhase, StoryScript};
use super::{lock, InteractError};
use crate::bus::{ActionHandle, Bus, GoalPolicy, GoalStatus, Publisher, ServerGoal};
use crate::clock::Nanos;
use crate::expression::{CueGroupId, CueScheduler, Library};
use crate::ifaces;
use crate::runtime::{Node, Step};

pub const STORY_OWNER: &str = "story";

/// One dispatched cue, as observed by the node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CueRecord {
    pub chunk: usize,
    pub index: usize,
    pub timeline_id: String,
    pub offset: f64,
    pub due: Nanos,
    pub fired_at: Nanos,
}

#[derive(Default)]
struct Inbox {
    goals: Vec<ServerGoal>,
    controls: Vec<StoryInput>,
}

struct Run {
    goal: ServerGoal,
    script: StoryScript,
    machine: StoryMachine,
    speak: Option<ActionHandle>,
}

pub struct StoryNode {
    bus: Bus,
    library: Arc<Library>,
    inbox: Arc<Mutex<Inbox>>,
    events: Publisher,
    cues: CueScheduler,
    /// Chunk each cue group belongs to; a trailing cue may fire after its
    /// chunk ended.
    groups: BTreeMap<CueGroupId, usize>,
    run: Option<Run>,
    /// A completed run whose trailing cues are still pending; the goal
    /// succeeds once they have fired.
    finishing: Option<Run>,
    dispatched: Vec<CueRecord>,
    phases: Vec<StoryPhase>,
}

fn parse_control(req: &Value) -> Result<StoryInput, String> {
    match req["command"].as_str() {
        Some("pause") => Ok(StoryInput::Pause),
        Some("resume") => Ok(StoryInput::Resume),
        Some("abort") => Ok(StoryInput::Abort("aborted by operator".into())),
        other => Err(format!("unknown story command {other:?}")),
    }
}

impl StoryNode {
    pub fn new(bus: &Bus, library: Arc<Library>) -> Result<Self, InteractError> {
        let inbox: Arc<Mutex<Inbox>> = Arc::default();
        let ib = inbox.clone();
        bus.serve_action(&ifaces::story_play(), STORY_OWNER, GoalPolicy::Reject, move |g| {
            ib.lock().unwrap().goals.push(g)
        })?;
        let ib = inbox.clone();
        bus.serve(&ifaces::story_control(), STORY_OWNER, move |req| {
            let input = parse_control(&req)?;
            ib.lock().unwrap().controls.push(input);
            Ok(json!({"queued": req["command"]}))
        })?;
        bus.register(&ifaces::story_events(), STORY_OWNER)?;
        Ok(Self {
            bus: bus.clone(),
            library,
            inbox,
            events: bus.publisher(&ifaces::story_events())?,
            cues: CueScheduler::new(),
            groups: BTreeMap::new(),
            run: None,
            finishing: None,
            dispatched: Vec::new(),
            phases: Vec::new(),
        })
    }

    /// Every cue dispatched so far, in dispatch order.
    pub fn dispatched(&self) -> &[CueRecord] {
        &self.dispatched
    }

    /// Every phase entered, in order, across all runs.
    pub fn phases(&self) -> &[StoryPhase] {
        &self.phases
    }

    pub fn is_running(&self) -> bool {
        self.run.is_some() || self.finishing.is_some()
    }

    fn emit(&self, event: &str, detail: Value) {
        if let Err(e) = self.events.publish(json!({"event": event, "detail": detail})) {
            log::warn!("story event {event}: {e}");
        }
    }

    fn begin(&mut self, goal: ServerGoal, now: Nanos) {
        let prepared = serde_json::from_value::<StoryScript>(goal.goal()["script"].clone())
            .map_err(|e| InteractError::InvalidScript(e.to_string()))
            .and_then(|s| s.validate(Some(&self.library)).map(|_| s))
            .and_then(|s| lock::acquire(&self.bus, STORY_OWNER).map(|_| s));
        let script = match prepared {
            Ok(s) => s,
            Err(e) => {
                let _ = goal.abort(&e.to_string());
                self.emit("rejected", json!({"error": e.to_string()}));
                return;
            }
        };
        if goal.accept().is_err() {
            lock::release(&self.bus, STORY_OWNER);
            return;
        }
        self.emit("started", json!({"id": script.id, "chunks": script.chunks.len()}));
        self.run = Some(Run {
            goal,
            machine: StoryMachine::new(script.chunks.len()),
            script,
            speak: None,
        });
        self.apply(StoryInput::Start, now);
    }

    fn apply(&mut self, input: StoryInput, now: Nanos) {
        let Some(run) = self.run.as_mut() else {
            return;
        };
        match run.machine.handle(input) {
            Ok(cmds) => {
                self.phases.push(run.machine.phase().clone());
                let phase = serde_json::to_value(run.machine.phase()).unwrap_or(Value::Null);
                self.emit("phase", phase);
                for c in cmds {
                    self.execute(c, now);
                }
            }
            Err(r) => self.emit(
                "rejected",
                json!({"input": format!("{:?}", r.input), "phase": r.phase}),
            ),
        }
    }

    fn execute(&mut self, cmd: StoryCommand, now: Nanos) {
        match cmd {
            StoryCommand::StartChunk(i) => {
                let run = self.run.as_mut().expect("commands only come from a run");
                let chunk = &run.script.chunks[i];
                let goal = json!({"text": chunk.text, "duration": chunk.duration});
                match self.bus.send_goal(&ifaces::speak(), goal) {
                    Ok(h) => run.speak = Some(h),
                    Err(e) => {
                        run.speak = None;
                        let why = e.to_string();
                        self.apply(StoryInput::SpeakFailed(why), now);
                        return;
                    }
                }
                let cues = chunk.cues.clone();
                let _ = run.goal.feedback(json!({"chunk": i}));
                let group = self.cues.schedule(&cues, now, |_| {});
                self.groups.insert(group, i);
                self.emit("chunk", json!({"chunk": i, "start": now.0}));
            }
            StoryCommand::StopChunk => {
                let run = self.run.as_mut().expect("commands only come from a run");
                if let Some(h) = run.speak.take() {
                    let _ = h.cancel();
                }
                let dropped = self.cues.cancel_all();
                self.groups.clear();
                self.emit("cues_canceled", json!({"pending": dropped}));
            }
            StoryCommand::Finish(phase) => {
                let run = self.run.take().expect("commands only come from a run");
                match &phase {
                    StoryPhase::Complete if self.cues.pending() > 0 => {
                        self.finishing = Some(run);
                        return;
                    }
                    StoryPhase::Complete => {
                        let _ = run.goal.succeed(json!({"phase": phase}));
                    }
                    StoryPhase::Aborted { cause } => {
                        let _ = run.goal.abort(cause);
                    }
                    _ => unreachable!("finish carries a terminal phase"),
                }
                self.close(run, phase);
            }
        }
    }

    fn close(&mut self, run: Run, phase: StoryPhase) {
        lock::release(&self.bus, STORY_OWNER);
        self.emit("finished", json!({"id": run.script.id, "phase": phase}));
    }

    /// Settles a completed run once its trailing cues are gone.
    fn settle_finishing(&mut self) -> bool {
        let Some(run) = &self.finishing else {
            return false;
        };
        if run.goal.is_terminal() {
            let dropped = self.cues.cancel_all();
            self.groups.clear();
            self.emit("cues_canceled", json!({"pending": dropped}));
        } else if self.cues.pending() > 0 {
            return false;
        } else {
            let _ = run.goal.succeed(json!({"phase": StoryPhase::Complete}));
        }
        let run = self.finishing.take().expect("checked above");
        let phase = if run.goal.status() == GoalStatus::Succeeded {
            StoryPhase::Complete
        } else {
            StoryPhase::Aborted { cause: "canceled by client".into() }
        };
        self.close(run, phase);
        true
    }

    fn fire_cues(&mut self, now: Nanos) -> bool {
        let fired = self.cues.poll(now);
        for d in &fired {
            let chunk = self.groups.get(&d.group).copied().unwrap_or_default();
            if let Err(e) = self
                .bus
                .send_goal(&ifaces::play_timeline(), json!({"timeline_id": d.timeline_id}))
            {
                log::warn!("cue {}: {e}", d.timeline_id);
            }
            let rec = CueRecord {
                chunk,
                index: d.index,
                timeline_id: d.timeline_id.clone(),
                offset: d.offset,
                due: d.due,
                fired_at: d.fired_at,
            };
            self.emit(
                "cue",
                json!({
                    "chunk": rec.chunk,
                    "index": rec.index,
                    "timeline_id": rec.timeline_id,
                    "offset": rec.offset,
                    "due": rec.due.0,
                    "fired_at": rec.fired_at.0,
                }),
            );
            self.dispatched.push(rec);
        }
        let cues = &self.cues;
        self.groups.retain(|g, _| cues.has_group(*g));
        !fired.is_empty()
    }
}

impl Node for StoryNode {
    fn name(&self) -> &str {
        STORY_OWNER
    }

    fn step(&mut self, now: Nanos) -> Step {
        let Inbox { goals, controls } = std::mem::take(&mut *self.inbox.lock().unwrap());
        let mut worked = !(goals.is_empty() && controls.is_empty());
        for g in goals {
            if self.is_running() {
                let _ = g.abort("ServerBusy");
            } else {
                self.begin(g, now);
            }
        }
        // Cues due now fire before an utterance ending now advances the chunk.
        worked |= self.fire_cues(now);
        worked |= self.settle_finishing();
        for c in controls {
            self.apply(c, now);
        }
        if let Some(run) = &self.run {
            if run.goal.is_terminal() {
                self.apply(StoryInput::Abort("canceled by client".into()), now);
                worked = true;
            }
        }
        let status = self
            .run
            .as_ref()
            .and_then(|r| r.speak.as_ref())
            .map(|h| h.status())
            .filter(|s| s.is_terminal());
        if let Some(s) = status {
            let run = self.run.as_mut().expect("status came from the run");
            let h = run.speak.take().expect("status came from the handle");
            let input = if s == GoalStatus::Succeeded {
                StoryInput::SpeakSucceeded
            } else {
                StoryInput::SpeakFailed(h.failure_reason().unwrap_or_else(|| format!("{s:?}")))
            };
            self.apply(input, now);
            worked = true;
        }
        Step {
            worked,
            wake: self.cues.next_due(),
        }
    }
}
