use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde_json::{json, Map, Value};

use super::scenario::{Scenario, ScenarioEvent, TimedEvent};
use super::servo::{servo_step_limited, ServoSim};
use super::{SimError, SimRates, SIM_PROVIDER};
use crate::bus::{Bus, GoalPolicy, Publisher, ServerGoal};
use crate::clock::Nanos;
use crate::expression::{
    EntryId, EntryOutcome, ExpressionEngine, Library, Timeline, TimelineSpec, DEFAULT_RAMP,
};
use crate::ifaces;
use crate::model::{JointId, RobotDescription};
use crate::runtime::{earliest, Node, Step};

#[derive(Default)]
struct Inbox {
    play: Vec<ServerGoal>,
    speak: Vec<ServerGoal>,
    targets: Vec<(JointId, f64)>,
}

struct Speech {
    goal: ServerGoal,
    start: Nanos,
    end: Nanos,
    duration: f64,
    next_feedback: Nanos,
}

struct Ticker {
    t0: Nanos,
    period: Nanos,
    k: u64,
}

impl Ticker {
    fn new(t0: Nanos, hz: f64) -> Self {
        Self {
            t0,
            period: Nanos::period_of_hz(hz),
            k: 0,
        }
    }

    fn next(&self) -> Nanos {
        self.t0 + Nanos(self.k * self.period.0)
    }

    /// True once per due tick; at most one tick is consumed per call.
    fn due(&mut self, now: Nanos) -> bool {
        if self.next() <= now {
            self.k += 1;
            true
        } else {
            false
        }
    }
}

struct Pubs {
    joints: Publisher,
    face: Publisher,
    radar: Publisher,
    touch: Publisher,
    haptic: Publisher,
    turns: Publisher,
}

/// Simulated robot: servo dynamics behind the expression engine, scripted
/// sensor streams and the speech action, all advanced on one tick loop.
pub struct SimProvider {
    desc: Arc<RobotDescription>,
    library: Arc<Library>,
    inbox: Arc<Mutex<Inbox>>,
    engine: ExpressionEngine,
    servos: BTreeMap<JointId, ServoSim>,
    t0: Nanos,
    joint_tick: Ticker,
    radar_tick: Ticker,
    feedback_period: Nanos,
    events: Vec<TimedEvent>,
    cursor: usize,
    energy: f64,
    pubs: Pubs,
    playing: BTreeMap<EntryId, ServerGoal>,
    speaking: Vec<Speech>,
    last_face: Option<String>,
    last_haptic: Option<f64>,
}

impl SimProvider {
    /// Registers the sim interface set on `bus`; time zero is the bus clock's
    /// current instant.
    pub fn new(
        bus: &Bus,
        desc: Arc<RobotDescription>,
        library: Arc<Library>,
        scenario: &Scenario,
        rates: SimRates,
    ) -> Result<Self, SimError> {
        scenario.validate()?;
        rates.validate()?;
        let reg = |i| bus.register(&i, SIM_PROVIDER);
        for i in [
            ifaces::joint_states(),
            ifaces::face_state(),
            ifaces::radar_energy(),
            ifaces::touch_events(),
            ifaces::haptic_state(),
            ifaces::user_turns(),
        ] {
            reg(i)?;
        }
        let inbox: Arc<Mutex<Inbox>> = Arc::default();

        let (ib, d) = (inbox.clone(), desc.clone());
        bus.serve(&ifaces::set_joint_targets(), SIM_PROVIDER, move |req| {
            let targets = parse_targets(&req)?;
            let mut reply = Map::new();
            let mut clamped = Vec::new();
            for (j, v) in targets {
                let c = d.limits(j).clamp(v);
                reply.insert(j.as_str().to_owned(), json!(c));
                clamped.push((j, c));
            }
            ib.lock().unwrap().targets.extend(clamped);
            Ok(json!({ "targets": reply }))
        })?;
        let ib = inbox.clone();
        bus.serve_action(&ifaces::play_timeline(), SIM_PROVIDER, GoalPolicy::Parallel, move |g| {
            ib.lock().unwrap().play.push(g)
        })?;
        let ib = inbox.clone();
        bus.serve_action(&ifaces::speak(), SIM_PROVIDER, GoalPolicy::Preempt, move |g| {
            ib.lock().unwrap().speak.push(g)
        })?;

        let t0 = bus.now();
        let servos = desc
            .rest_pose()
            .into_iter()
            .map(|(j, q)| (j, ServoSim::new(q, desc.limits(j).v_max)))
            .collect();
        Ok(Self {
            engine: ExpressionEngine::new(desc.clone(), 0.0),
            desc,
            library,
            inbox,
            servos,
            t0,
            joint_tick: Ticker::new(t0, rates.joints_hz),
            radar_tick: Ticker::new(t0, rates.radar_hz),
            feedback_period: Nanos::period_of_hz(rates.feedback_hz),
            events: scenario.events.clone(),
            cursor: 0,
            energy: 0.0,
            pubs: Pubs {
                joints: bus.publisher(&ifaces::joint_states())?,
                face: bus.publisher(&ifaces::face_state())?,
                radar: bus.publisher(&ifaces::radar_energy())?,
                touch: bus.publisher(&ifaces::touch_events())?,
                haptic: bus.publisher(&ifaces::haptic_state())?,
                turns: bus.publisher(&ifaces::user_turns())?,
            },
            playing: BTreeMap::new(),
            speaking: Vec::new(),
            last_face: None,
            last_haptic: None,
        })
    }

    pub fn description(&self) -> &RobotDescription {
        &self.desc
    }

    pub fn positions(&self) -> BTreeMap<JointId, f64> {
        self.servos.iter().map(|(j, s)| (*j, s.current)).collect()
    }

    fn secs(&self, now: Nanos) -> f64 {
        now.saturating_sub(self.t0).as_secs_f64()
    }

    fn event_time(&self, e: &TimedEvent) -> Nanos {
        self.t0 + Nanos::from_secs_f64(e.t)
    }

    fn replay_scenario(&mut self, now: Nanos) -> bool {
        let mut worked = false;
        while let Some(e) = self.events.get(self.cursor) {
            if self.event_time(e) > now {
                break;
            }
            let r = match &e.event {
                ScenarioEvent::RadarEnergy { value } => {
                    self.energy = *value;
                    Ok(())
                }
                ScenarioEvent::Touch { pad_id, pressed } => self
                    .pubs
                    .touch
                    .publish(json!({"pad_id": pad_id, "pressed": pressed}))
                    .map(drop),
                ScenarioEvent::UserTurn { text } => {
                    self.pubs.turns.publish(json!({ "text": text })).map(drop)
                }
            };
            if let Err(err) = r {
                log::error!("scenario event {}: {err}", self.cursor);
            }
            self.cursor += 1;
            worked = true;
        }
        worked
    }

    fn intake(&mut self, now: Nanos) -> bool {
        let Inbox { play, speak, targets } = std::mem::take(&mut *self.inbox.lock().unwrap());
        let worked = !(play.is_empty() && speak.is_empty() && targets.is_empty());
        for (j, v) in targets {
            self.engine.set_target(j, v);
        }
        let t = self.secs(now);
        for g in play {
            if g.is_terminal() {
                continue;
            }
            match self.resolve_timeline(g.goal()) {
                Ok((tl, ramp)) => {
                    if g.accept().is_ok() {
                        let id = self.engine.play_at(tl, t, ramp);
                        self.playing.insert(id, g);
                    }
                }
                Err(why) => {
                    let _ = g.abort(&why);
                }
            }
        }
        for g in speak {
            if g.is_terminal() {
                continue;
            }
            let duration = g.goal()["duration"].as_f64().unwrap_or(f64::NAN);
            if !(duration.is_finite() && duration > 0.0) {
                let _ = g.abort(&format!("InvalidDuration: {duration}"));
                continue;
            }
            if g.accept().is_ok() {
                self.speaking.push(Speech {
                    goal: g,
                    start: now,
                    end: now + Nanos::from_secs_f64(duration),
                    duration,
                    next_feedback: now + self.feedback_period,
                });
            }
        }
        worked
    }

    fn resolve_timeline(&self, goal: &Value) -> Result<(Arc<Timeline>, f64), String> {
        let ramp = goal["ramp"].as_f64().unwrap_or(DEFAULT_RAMP);
        if !(ramp.is_finite() && ramp >= 0.0) {
            return Err(format!("invalid ramp {ramp}"));
        }
        let id = goal["timeline_id"].as_str().unwrap_or_default();
        let tl = match goal.get("timeline").filter(|v| !v.is_null()) {
            Some(spec) => {
                let spec: TimelineSpec =
                    serde_json::from_value(spec.clone()).map_err(|e| e.to_string())?;
                Arc::new(Timeline::new(spec, &self.desc).map_err(|e| e.to_string())?)
            }
            None => self
                .library
                .get(id)
                .ok_or_else(|| format!("unknown timeline {id:?}"))?,
        };
        Ok((tl, ramp))
    }

    fn advance_speech(&mut self, now: Nanos) -> (bool, Option<Nanos>) {
        let mut worked = false;
        let mut wake = None;
        let period = self.feedback_period;
        self.speaking.retain_mut(|s| {
            if s.goal.is_terminal() {
                worked = true;
                return false;
            }
            while s.next_feedback < s.end && s.next_feedback <= now {
                let fraction = (s.next_feedback - s.start).as_secs_f64() / s.duration;
                let _ = s.goal.feedback(json!({ "fraction": fraction }));
                s.next_feedback += period;
                worked = true;
            }
            if now >= s.end {
                let _ = s.goal.feedback(json!({ "fraction": 1.0 }));
                let _ = s.goal.succeed(json!({
                    "text": s.goal.goal()["text"],
                    "duration": s.duration,
                }));
                worked = true;
                return false;
            }
            wake = earliest(wake, Some(s.next_feedback.min(s.end)));
            true
        });
        (worked, wake)
    }

    fn reap_canceled(&mut self) -> bool {
        let gone: Vec<EntryId> = self
            .playing
            .iter()
            .filter(|(_, g)| g.is_terminal())
            .map(|(id, _)| *id)
            .collect();
        for id in &gone {
            self.playing.remove(id);
            self.engine.stop(*id);
        }
        !gone.is_empty()
    }

    fn tick_joints(&mut self, now: Nanos) {
        let dt = self.joint_tick.period.as_secs_f64();
        let t = self.secs(now);
        let frame = self.engine.tick(t).clone();
        let mut position = Map::new();
        let mut velocity = Map::new();
        for (j, servo) in self.servos.iter_mut() {
            servo.target = frame.joints[j];
            let (next, v) = servo_step_limited(*servo, &self.desc.limits(*j), dt);
            *servo = next;
            position.insert(j.as_str().to_owned(), json!(next.current));
            velocity.insert(j.as_str().to_owned(), json!(v));
        }
        let _ = self.pubs.joints.publish(json!({
            "t_mono": now.0,
            "position": position,
            "velocity": velocity,
        }));
        if frame.face != self.last_face {
            if let Some(f) = &frame.face {
                let _ = self.pubs.face.publish(json!({ "expression": f }));
            }
            self.last_face = frame.face.clone();
        }
        if frame.haptic != self.last_haptic {
            if let Some(h) = frame.haptic {
                let _ = self.pubs.haptic.publish(json!({ "amplitude": h }));
            }
            self.last_haptic = frame.haptic;
        }
        for ev in self.engine.take_events() {
            let Some(g) = self.playing.remove(&ev.id) else {
                continue;
            };
            let _ = match ev.outcome {
                EntryOutcome::Finished => g.succeed(json!({ "timeline_id": ev.timeline_id })),
                EntryOutcome::Displaced => g.preempt(),
                EntryOutcome::Removed => Ok(()),
            };
        }
    }
}

fn parse_targets(req: &Value) -> Result<Vec<(JointId, f64)>, String> {
    let obj = req["targets"]
        .as_object()
        .ok_or_else(|| "targets must be an object".to_owned())?;
    obj.iter()
        .map(|(k, v)| {
            let j: JointId = k.parse().map_err(|_| format!("unknown joint {k:?}"))?;
            let x = v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("target for {k} must be a finite number"))?;
            Ok((j, x))
        })
        .collect()
}

impl Node for SimProvider {
    fn name(&self) -> &str {
        SIM_PROVIDER
    }

    fn step(&mut self, now: Nanos) -> Step {
        let mut worked = self.replay_scenario(now);
        worked |= self.intake(now);
        worked |= self.reap_canceled();
        let (spoke, speech_wake) = self.advance_speech(now);
        worked |= spoke;
        if self.joint_tick.due(now) {
            self.tick_joints(now);
            worked = true;
        }
        if self.radar_tick.due(now) {
            let _ = self.pubs.radar.publish(json!({ "energy": self.energy }));
            worked = true;
        }
        let next_event = self.events.get(self.cursor).map(|e| self.event_time(e));
        Step {
            worked,
            wake: earliest(
                earliest(Some(self.joint_tick.next()), Some(self.radar_tick.next())),
                earliest(next_event, speech_wake),
            ),
        }
    }
}
