//! Conversational coaching driver: turns in, conversational acts out.

use std::collections::VecDeque;
use std::sync::Arc;

use serde_json::{json, Value};

use super::generator::ResponseGenerator;
use super::session::{ingest_turn, record_act, ConversationalAct, Phase, PhasePolicy, SessionState};
use super::{lock, InteractError};
use crate::bus::{ActionHandle, Bus, GoalStatus, Publisher, Subscription};
use crate::clock::Nanos;
use crate::expression::Library;
use crate::ifaces;
use crate::runtime::{Node, Step};

pub const COACH_OWNER: &str = "coach";

/// Face timelines outrank gestures that also carry a face track.
const FACE_PRIORITY: i32 = 2;

/// Goals started for one act. All three share the same start instant.
#[derive(Debug)]
pub struct Delivery {
    pub face: ActionHandle,
    pub gesture: ActionHandle,
    pub speak: ActionHandle,
    pub start: Nanos,
}

impl Delivery {
    /// Terminal status of the utterance, which alone decides completion.
    pub fn speak_status(&self) -> Option<GoalStatus> {
        let s = self.speak.status();
        s.is_terminal().then_some(s)
    }
}

/// Starts face, gesture and speech together. Nothing is sent unless the act
/// resolves against `library`.
pub fn deliver(bus: &Bus, library: &Library, act: &ConversationalAct) -> Result<Delivery, InteractError> {
    act.validate(library)?;
    let start = bus.now();
    let face_tl = json!({
        "id": format!("face_{}", act.face),
        "priority": FACE_PRIORITY,
        "duration": act.estimated_duration,
        "tracks": [{"kind": "face", "keyframes": [{"t": 0.0, "expression": act.face}]}],
    });
    let face = bus.send_goal(
        &ifaces::play_timeline(),
        json!({"timeline_id": format!("face_{}", act.face), "timeline": face_tl}),
    )?;
    let gesture = bus.send_goal(&ifaces::play_timeline(), json!({"timeline_id": act.gesture}))?;
    let speak = bus.send_goal(
        &ifaces::speak(),
        json!({"text": act.utterance, "duration": act.estimated_duration}),
    )?;
    Ok(Delivery {
        face,
        gesture,
        speak,
        start,
    })
}

#[derive(Clone, Debug)]
pub struct CoachOptions {
    pub session_id: String,
    pub day: u8,
    pub progress: [bool; 5],
    pub policy: PhasePolicy,
}

struct Exchange {
    delivery: Delivery,
    change: Option<(Phase, Option<Phase>)>,
}

/// Owns one session. Turns are queued from `/m/user_turns`; one exchange
/// runs at a time and each ends when its utterance does.
pub struct CoachNode {
    bus: Bus,
    library: Arc<Library>,
    generator: Box<dyn ResponseGenerator>,
    policy: PhasePolicy,
    state: SessionState,
    turns_in: Subscription,
    events: Publisher,
    queue: VecDeque<(String, Nanos)>,
    current: Option<Exchange>,
    trace: Vec<Phase>,
    failure: Option<InteractError>,
    lock_held: bool,
}

impl CoachNode {
    pub fn new(
        bus: &Bus,
        library: Arc<Library>,
        generator: Box<dyn ResponseGenerator>,
        opts: CoachOptions,
    ) -> Result<Self, InteractError> {
        let state = SessionState::open(&opts.session_id, opts.day, opts.progress)?;
        Self::with_state(bus, library, generator, opts.policy, state)
    }

    /// Continues a saved session from the phase boundary it stopped at.
    pub fn resume(
        bus: &Bus,
        library: Arc<Library>,
        generator: Box<dyn ResponseGenerator>,
        policy: PhasePolicy,
        state: SessionState,
    ) -> Result<Self, InteractError> {
        Self::with_state(bus, library, generator, policy, state.resume()?)
    }

    fn with_state(
        bus: &Bus,
        library: Arc<Library>,
        generator: Box<dyn ResponseGenerator>,
        policy: PhasePolicy,
        state: SessionState,
    ) -> Result<Self, InteractError> {
        let (session_id, day) = (state.session_id.clone(), state.day);
        bus.register(&ifaces::coach_events(), COACH_OWNER)?;
        lock::acquire(bus, COACH_OWNER)?;
        let node = Self {
            bus: bus.clone(),
            library,
            generator,
            policy,
            state,
            turns_in: bus.subscribe_with_capacity(&ifaces::user_turns(), 1024)?,
            events: bus.publisher(&ifaces::coach_events())?,
            queue: VecDeque::new(),
            current: None,
            trace: Vec::new(),
            failure: None,
            lock_held: true,
        };
        node.emit("session_open", json!({"session_id": session_id, "day": day, "phase": node.state.phase}));
        Ok(node)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    /// Phase in which each exchange was held, in order.
    pub fn trace(&self) -> &[Phase] {
        &self.trace
    }

    pub fn failure(&self) -> Option<&InteractError> {
        self.failure.as_ref()
    }

    /// Closed, failed, or idle with nothing left to answer.
    pub fn is_done(&self) -> bool {
        self.failure.is_some() || (self.state.closed && self.current.is_none())
    }

    fn emit(&self, event: &str, detail: Value) {
        if let Err(e) = self.events.publish(json!({"event": event, "detail": detail})) {
            log::warn!("coach event {event}: {e}");
        }
    }

    fn fail(&mut self, e: InteractError) {
        self.emit("failed", json!({"error": e.to_string()}));
        self.failure = Some(e);
        self.release();
    }

    fn release(&mut self) {
        if std::mem::take(&mut self.lock_held) {
            lock::release(&self.bus, COACH_OWNER);
        }
    }

    fn start_exchange(&mut self, text: &str, t: Nanos) -> Result<(), InteractError> {
        let state = ingest_turn(&self.state, text, t)?;
        let phase = state.phase;
        self.emit(
            "user_turn",
            json!({"text": state.last_user_text(), "phase": phase.as_str()}),
        );
        let act = self.generator.generate(&state)?;
        self.emit(
            "robot_act",
            json!({
                "utterance": act.utterance,
                "face": act.face,
                "gesture": act.gesture,
                "estimated_duration": act.estimated_duration,
                "phase": phase.as_str(),
            }),
        );
        let delivery = deliver(&self.bus, &self.library, &act)?;
        let (state, change) = record_act(&state, &act, delivery.start, &self.policy)?;
        self.state = state;
        self.trace.push(phase);
        self.current = Some(Exchange { delivery, change });
        Ok(())
    }

    fn finish_exchange(&mut self, ex: Exchange, status: GoalStatus) {
        if status != GoalStatus::Succeeded {
            let why = ex
                .delivery
                .speak
                .failure_reason()
                .unwrap_or_else(|| format!("{status:?}"));
            self.fail(InteractError::SpeakFailed(why));
            return;
        }
        if let Some((from, to)) = ex.change {
            self.emit(
                "phase",
                json!({"from": from.as_str(), "to": to.map(Phase::as_str)}),
            );
        }
        self.emit("exchange_done", json!({"exchanges": self.trace.len()}));
        if self.state.closed {
            self.emit(
                "session_closed",
                json!({"day": self.state.day, "progress": self.state.progress}),
            );
            self.release();
        }
    }
}

impl Drop for CoachNode {
    fn drop(&mut self) {
        self.release();
    }
}

impl Node for CoachNode {
    fn name(&self) -> &str {
        COACH_OWNER
    }

    fn step(&mut self, _now: Nanos) -> Step {
        let mut worked = false;
        for env in self.turns_in.drain() {
            let text = env.payload["text"].as_str().unwrap_or_default().to_owned();
            self.queue.push_back((text, env.t_mono));
            worked = true;
        }
        if self.failure.is_some() {
            return Step::idle().worked(worked);
        }
        if let Some(status) = self.current.as_ref().and_then(|ex| ex.delivery.speak_status()) {
            let ex = self.current.take().expect("checked above");
            self.finish_exchange(ex, status);
            worked = true;
        }
        while self.current.is_none() && self.failure.is_none() {
            let Some((text, t)) = self.queue.pop_front() else {
                break;
            };
            worked = true;
            match self.start_exchange(&text, t) {
                Ok(()) => {}
                Err(e @ (InteractError::EmptyTurn | InteractError::SessionClosed)) => {
                    self.emit("turn_rejected", json!({"text": text, "error": e.to_string()}));
                }
                Err(e) => self.fail(e),
            }
        }
        Step::idle().worked(worked)
    }
}

/// Plays scripted user turns: the first after `delay`, each later one
/// `delay` after the coach reports an exchange done.
pub struct ScriptedUser {
    turns: VecDeque<String>,
    delay: Nanos,
    next_at: Option<Nanos>,
    coach_in: Subscription,
    out: Publisher,
}

impl ScriptedUser {
    pub fn new(bus: &Bus, turns: Vec<String>, delay: Nanos) -> Result<Self, InteractError> {
        bus.register(&ifaces::coach_events(), COACH_OWNER)?;
        Ok(Self {
            turns: turns.into(),
            delay,
            next_at: Some(bus.now() + delay),
            coach_in: bus.subscribe_with_capacity(&ifaces::coach_events(), 1024)?,
            out: bus.publisher(&ifaces::user_turns())?,
        })
    }

    pub fn remaining(&self) -> usize {
        self.turns.len()
    }
}

impl Node for ScriptedUser {
    fn name(&self) -> &str {
        "scripted_user"
    }

    fn step(&mut self, now: Nanos) -> Step {
        let mut worked = false;
        for env in self.coach_in.drain() {
            if env.payload["event"] == "exchange_done" {
                self.next_at = Some(env.t_mono + self.delay);
            }
        }
        if let Some(at) = self.next_at {
            if at <= now {
                self.next_at = None;
                if let Some(text) = self.turns.pop_front() {
                    if let Err(e) = self.out.publish(json!({"text": text})) {
                        log::warn!("scripted turn: {e}");
                    }
                    worked = true;
                }
            }
        }
        let wake = self.next_at.filter(|_| !self.turns.is_empty());
        Step { worked, wake }
    }
}
