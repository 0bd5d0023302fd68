//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Every check computes its expectation independently of the code under test
//! (hand-written oracle, brute force, or a second run) and applies the stated
//! tolerance unchanged.

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use m_core::bus::{
    registry_diff, Bus, FieldType, GoalPolicy, GoalStatus, InterfaceName, Schema, ServerGoal,
};
use m_core::clock::{Nanos, VirtualClock};
use m_core::config::{LoadedConfig, PlatformConfig};
use m_core::expression::{Channel, Easing, ExpressionEngine, JointKeyframe, Library, Timeline, TimelineSpec, Track};
use m_core::ifaces;
use m_core::interact::{
    CoachNode, CoachOptions, MockGenerator, Phase, PhasePolicy, ScriptedUser, StoryInput, StoryMachine, StoryNode,
    StoryPhase, StoryScript,
};
use m_core::logkit::{
    part_files, read_session, register_streams, replay, Recorder, RecorderOptions, ReplaySpeed, Strictness,
};
use m_core::logkit::{health, DEFAULT_LIVENESS};
use m_core::model::{JointId, RobotDescription};
use m_core::perception::{presence_update, PresenceConfig, PresenceState, TouchClassifier, TouchConfig, TouchKind};
use m_core::platform::{Platform, RunOptions};
use m_core::runtime::Shared;
use m_core::sim::{backend_registry, servo_step, ticks_to_converge, Backend, Scenario, ServoSim};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn config_at(root: &Path) -> LoadedConfig {
    let mut c = PlatformConfig::load(&assets().join("config/default.json")).expect("bundled config");
    c.config.log_root = root.to_owned();
    c
}

fn bundled_scenario() -> Scenario {
    Scenario::load(&assets().join("scenarios/demo.json")).expect("bundled scenario")
}

fn bundled_story() -> StoryScript {
    StoryScript::load(&assets().join("stories/lighthouse.json")).expect("bundled story")
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

// Interface equivalence ------------------------------------------------------

fn interface_equivalence() -> Check {
    let sim = backend_registry(Backend::Sim).map_err(|e| e.to_string())?;
    let hw = backend_registry(Backend::HardwareStub).map_err(|e| e.to_string())?;
    // `m registry diff` exits 0 iff the diff is empty.
    let d = registry_diff(&sim, &hw);
    ensure(d.is_empty(), || format!("sim vs hardware-stub differ: {d:?}"))?;
    ensure(!sim.is_empty(), || "empty registry".into())?;
    let mut flipped = 0;
    for (base, other) in [(&sim, &hw), (&hw, &sim)] {
        for i in base.interfaces() {
            let mut cut = base.clone();
            ensure(cut.remove_path(&i.path, i.kind), || format!("cannot remove {}", i.path))?;
            ensure(!registry_diff(other, &cut).is_empty(), || format!("removing {} not detected", i.path))?;
            ensure(!registry_diff(&cut, other).is_empty(), || format!("removing {} not detected (reversed)", i.path))?;
            flipped += 1;
        }
    }
    Ok(format!("{} interfaces equal, {flipped} single removals all detected", sim.len()))
}

// Bus properties --------------------------------------------------------------

/// Legal goal status histories, written from the lifecycle definition.
fn legal_history(h: &[GoalStatus]) -> Result<(), String> {
    use GoalStatus::*;
    let terminal = |s: GoalStatus| matches!(s, Succeeded | Canceled | Aborted | Preempted);
    if h.first() != Some(&Pending) {
        return Err(format!("history must start pending: {h:?}"));
    }
    for w in h.windows(2) {
        let ok = match (w[0], w[1]) {
            (Pending, Active) => true,
            (Pending | Active, t) => terminal(t),
            _ => false,
        };
        if !ok {
            return Err(format!("illegal step {:?} -> {:?} in {h:?}", w[0], w[1]));
        }
    }
    let terminals = h.iter().filter(|s| terminal(**s)).count();
    if terminals != 1 || !terminal(*h.last().unwrap()) {
        return Err(format!("expected exactly one terminal status at the end: {h:?}"));
    }
    Ok(())
}

fn play_goal(n: u64) -> serde_json::Value {
    json!({"timeline_id": format!("g{n}")})
}

fn random_lifecycles(rng: &mut ChaCha8Rng, goals: usize, policy: GoalPolicy) -> Result<(), String> {
    let bus = Bus::new(Arc::new(VirtualClock::new()));
    let iface = ifaces::play_timeline();
    let inbox: Arc<Mutex<Vec<ServerGoal>>> = Arc::default();
    let ib = inbox.clone();
    bus.serve_action(&iface, "acceptance", policy, move |g| ib.lock().unwrap().push(g))
        .map_err(|e| e.to_string())?;
    let mut handles = Vec::new();
    let mut live: Vec<usize> = Vec::new();
    let op = |rng: &mut ChaCha8Rng, h: &m_core::bus::ActionHandle, server: Option<&ServerGoal>| {
        // Illegal requests are refused by the bus; only the history matters here.
        match (rng.random_range(0..7), server) {
            (0, Some(s)) => drop(s.accept()),
            (1, Some(s)) => drop(s.feedback(json!({"t": 0.0}))),
            (2, Some(s)) => drop(s.succeed(json!({}))),
            (3, Some(s)) => drop(s.abort("random")),
            (4, Some(s)) => drop(s.preempt()),
            (5, _) => drop(h.cancel()),
            _ => {}
        }
    };
    for n in 0..goals {
        let h = bus.send_goal(&iface, play_goal(n as u64)).map_err(|e| e.to_string())?;
        handles.push(h);
        live.push(n);
        for _ in 0..rng.random_range(0..4) {
            if live.is_empty() {
                break;
            }
            let k = live[rng.random_range(0..live.len())];
            let server = inbox.lock().unwrap().iter().find(|g| g.id() == handles[k].id()).cloned();
            op(rng, &handles[k], server.as_ref());
        }
        live.retain(|&k| !handles[k].is_terminal());
    }
    // Drain: finish whatever is still open, dispatching queued goals as we go.
    for _ in 0..goals * 2 {
        let open: Vec<usize> = (0..handles.len()).filter(|&k| !handles[k].is_terminal()).collect();
        if open.is_empty() {
            break;
        }
        for k in open {
            let server = inbox.lock().unwrap().iter().find(|g| g.id() == handles[k].id()).cloned();
            match server {
                Some(s) => drop(s.succeed(json!({}))),
                None if rng.random_bool(0.5) => drop(handles[k].cancel()),
                None => {}
            }
        }
    }
    for h in &handles {
        legal_history(&h.history())?;
    }
    Ok(())
}

fn racing_lifecycles(rng: &mut ChaCha8Rng, goals: usize) -> Result<(), String> {
    let bus = Bus::new(Arc::new(VirtualClock::new()));
    let iface = ifaces::play_timeline();
    let inbox: Arc<Mutex<VecDeque<ServerGoal>>> = Arc::default();
    let ib = inbox.clone();
    bus.serve_action(&iface, "acceptance", GoalPolicy::Parallel, move |g| ib.lock().unwrap().push_back(g))
        .map_err(|e| e.to_string())?;
    for n in 0..goals {
        let h = bus.send_goal(&iface, play_goal(n as u64)).map_err(|e| e.to_string())?;
        let s = inbox.lock().unwrap().pop_front().ok_or("handler did not run")?;
        let server_first = rng.random_bool(0.5);
        let finish = rng.random_range(0..3);
        std::thread::scope(|sc| {
            sc.spawn(|| {
                if server_first {
                    std::thread::yield_now();
                }
                let _ = h.cancel();
            });
            sc.spawn(|| {
                let _ = s.accept();
                let _ = s.feedback(json!({"t": 1.0}));
                let _ = match finish {
                    0 => s.succeed(json!({})),
                    1 => s.abort("raced"),
                    _ => s.preempt(),
                };
            });
        });
        legal_history(&h.history())?;
    }
    Ok(())
}

fn concurrent_fifo(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let bus = Bus::new(Arc::new(VirtualClock::new()));
    bus.define_schema(Schema::new(
        "acceptance/Seq",
        1,
        &[("publisher", FieldType::Integer), ("n", FieldType::Integer)],
    ));
    let topic = InterfaceName::topic("/acceptance/fifo", "acceptance/Seq@1").map_err(|e| e.to_string())?;
    bus.register(&topic, "acceptance").map_err(|e| e.to_string())?;
    let publishers = rng.random_range(2..9usize);
    let counts: Vec<u64> = (0..publishers).map(|_| rng.random_range(50..400)).collect();
    let total: u64 = counts.iter().sum();
    let sub = bus.subscribe_with_capacity(&topic, total as usize).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..publishers).map(|_| rng.random()).collect();
    std::thread::scope(|sc| {
        for (p, (&count, &seed)) in counts.iter().zip(&seeds).enumerate() {
            let bus = bus.clone();
            let topic = topic.clone();
            sc.spawn(move || {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let publ = bus.publisher(&topic).unwrap();
                for n in 0..count {
                    publ.publish(json!({"publisher": p, "n": n})).unwrap();
                    if r.random_bool(0.2) {
                        std::thread::yield_now();
                    }
                }
            });
        }
    });
    let got = sub.drain();
    ensure(got.len() as u64 == total && sub.dropped() == 0, || {
        format!("received {} of {total}, dropped {}", got.len(), sub.dropped())
    })?;
    let mut next = vec![0u64; publishers];
    let mut last_seq = 0;
    for env in &got {
        ensure(env.seq > last_seq, || format!("seq went {last_seq} -> {}", env.seq))?;
        last_seq = env.seq;
        let p = env.payload["publisher"].as_u64().unwrap() as usize;
        let n = env.payload["n"].as_u64().unwrap();
        ensure(n == next[p], || format!("publisher {p}: got {n}, expected {}", next[p]))?;
        next[p] += 1;
    }
    Ok(publishers)
}

fn bus_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB05);
    let mut lifecycles = 0;
    for policy in [GoalPolicy::Parallel, GoalPolicy::Preempt, GoalPolicy::Queue] {
        for _ in 0..4 {
            random_lifecycles(&mut rng, 500, policy)?;
            lifecycles += 500;
        }
    }
    racing_lifecycles(&mut rng, 4000)?;
    lifecycles += 4000;
    ensure(lifecycles == 10_000, || format!("{lifecycles} lifecycles"))?;
    let mut publishers = 0;
    for _ in 0..20 {
        publishers += concurrent_fifo(&mut rng)?;
    }
    Ok(format!("{lifecycles} lifecycles legal; FIFO held in 20 rounds ({publishers} publishers)"))
}

// Expression math ---------------------------------------------------------------

/// Horner evaluation of 3u^2 - 2u^3 from its coefficient list.
fn smoothstep_oracle(u: f64) -> f64 {
    [-2.0, 3.0, 0.0, 0.0].iter().fold(0.0, |acc, c| acc * u + c)
}

fn two_key(desc: &RobotDescription, a: f64, b: f64, t0: f64, t1: f64) -> Timeline {
    Timeline::new(
        TimelineSpec {
            id: "mid".into(),
            priority: 0,
            duration: None,
            tracks: vec![Track::Joint {
                keyframes: vec![
                    JointKeyframe { t: t0, targets: [(JointId::HeadYaw, a)].into(), easing: Easing::Linear },
                    JointKeyframe { t: t1, targets: [(JointId::HeadYaw, b)].into(), easing: Easing::Linear },
                ],
            }],
        },
        desc,
    )
    .expect("valid timeline")
}

fn expression_math() -> Check {
    let desc = Arc::new(RobotDescription::builtin());
    let lim = desc.limits(JointId::HeadYaw);
    let mut rng = ChaCha8Rng::seed_from_u64(0xE1);
    let mut worst_mid: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(lim.min..lim.max), rng.random_range(lim.min..lim.max));
        let t0 = rng.random_range(0.0..2.0);
        let t1 = t0 + rng.random_range(0.05..3.0);
        let tl = two_key(&desc, a, b, t0, t1);
        let got = tl.sample_numeric(Channel::Joint(JointId::HeadYaw), 0.5 * (t0 + t1)).ok_or("no sample")?;
        worst_mid = worst_mid.max((got - 0.5 * (a + b)).abs());
    }
    ensure(worst_mid <= 1e-9, || format!("linear midpoint error {worst_mid:e}"))?;
    ensure((Easing::Linear.apply(0.5) - 0.5).abs() <= 1e-9, || "linear(0.5)".into())?;

    let s = Easing::Smoothstep.apply(0.25);
    ensure((s - 0.15625).abs() <= 1e-9, || format!("smoothstep(0.25) = {s}"))?;
    ensure((s - smoothstep_oracle(0.25)).abs() <= 1e-9, || "smoothstep disagrees with oracle".into())?;
    for k in 0..=1000 {
        let u = k as f64 / 1000.0;
        let e = (Easing::Smoothstep.apply(u) - smoothstep_oracle(u)).abs();
        ensure(e <= 1e-9, || format!("smoothstep({u}) off by {e:e}"))?;
    }

    // Preemption continuity: every tick moves each joint by at most v_max * dt.
    let lib = Library::builtin(&desc);
    let gestures: Vec<Arc<Timeline>> = lib.gestures().filter_map(|g| lib.get(g)).collect();
    let mut eng = ExpressionEngine::new(desc.clone(), 0.0);
    let mut instants: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..300.0)).collect();
    instants.sort_by(f64::total_cmp);
    let mut pending: VecDeque<f64> = instants.into();
    let mut t = 0.0;
    let mut prev = eng.output().joints.clone();
    let (mut ticks, mut preempts, mut worst) = (0u64, 0usize, f64::NEG_INFINITY);
    while t < 301.0 {
        let dt = rng.random_range(0.005..0.05);
        let next_t = t + dt;
        while pending.front().is_some_and(|&p| p <= next_t) {
            let at = pending.pop_front().unwrap();
            let g = gestures[rng.random_range(0..gestures.len())].clone();
            eng.play_at(g, at, rng.random_range(0.0..0.4));
            preempts += 1;
        }
        let out = eng.tick(next_t).joints.clone();
        for j in JointId::ALL {
            let bound = desc.limits(j).v_max * dt + 1e-9;
            let step = (out[&j] - prev[&j]).abs();
            worst = worst.max(step - bound);
            ensure(step <= bound, || format!("{j:?} moved {step} > {bound} at t={next_t}"))?;
        }
        prev = out;
        t = next_t;
        ticks += 1;
    }
    ensure(preempts == 1000, || format!("{preempts} preemptions"))?;
    Ok(format!(
        "midpoint err {worst_mid:.1e}, smoothstep(0.25)={s}, {preempts} preemptions over {ticks} ticks, max slack {:.1e}",
        -worst
    ))
}

// Servo model -------------------------------------------------------------------

/// Counts ticks by stepping a position, independent of the servo code.
fn brute_force_ticks(gap: f64, v_max: f64, dt: f64) -> u64 {
    let (mut x, mut n) = (0.0f64, 0u64);
    while x != gap {
        let reach = v_max * dt;
        x = if (gap - x).abs() <= reach { gap } else { x + reach.copysign(gap - x) };
        n += 1;
    }
    n
}

fn servo_model() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E);
    let mut max_ticks = 0;
    for _ in 0..100 {
        let gap = rng.random_range(0.01..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let v = rng.random_range(0.2..5.0);
        let dt = rng.random_range(0.001..0.05);
        let oracle = brute_force_ticks(gap, v, dt);
        let formula = ticks_to_converge(gap, v, dt);
        let mut s = ServoSim { current: 0.0, target: gap, v_max: v };
        let mut stepped = 0;
        while !s.at_target() {
            s = servo_step(s, dt).0;
            stepped += 1;
        }
        ensure(formula == oracle && stepped == oracle, || {
            format!("gap {gap} v {v} dt {dt}: oracle {oracle}, formula {formula}, servo {stepped}")
        })?;
        max_ticks = max_ticks.max(oracle);
    }
    Ok(format!("100 triples exact (up to {max_ticks} ticks)"))
}

// Cue timing --------------------------------------------------------------------

fn play_story(virtual_time: bool) -> Result<Vec<m_core::interact::CueRecord>, String> {
    let root = tempdir();
    let opts = RunOptions {
        virtual_time,
        ..RunOptions::default()
    };
    let mut p = Platform::build(config_at(root.path()), opts).map_err(|e| e.to_string())?;
    let (node, story) = Shared::new(StoryNode::new(&p.bus, p.library.clone()).map_err(|e| e.to_string())?);
    p.add(node);
    let script = bundled_story();
    let h = p
        .bus
        .send_goal(&ifaces::story_play(), json!({ "script": script }))
        .map_err(|e| e.to_string())?;
    let deadline = p.bus.now() + Nanos::from_secs_f64(60.0);
    p.executor.run_while(Some(deadline), || !h.is_terminal());
    ensure(h.status() == GoalStatus::Succeeded, || format!("story ended {:?}", h.status()))?;
    let d = story.lock().unwrap().dispatched().to_vec();
    Ok(d)
}

fn cue_timing() -> Check {
    let script = bundled_story();
    // Chunk k starts when chunk k-1's utterance ends.
    let mut expected = Vec::new();
    let mut start = Nanos::ZERO;
    for (k, c) in script.chunks.iter().enumerate() {
        for (i, cue) in c.cues.cues.iter().enumerate() {
            expected.push((k, i, start + Nanos::from_secs_f64(cue.offset)));
        }
        start = start + Nanos::from_secs_f64(c.duration);
    }
    let virt = play_story(true)?;
    ensure(virt.len() == expected.len(), || format!("{} of {} cues dispatched", virt.len(), expected.len()))?;
    for (d, (k, i, at)) in virt.iter().zip(&expected) {
        ensure(d.chunk == *k && d.index == *i && d.fired_at == *at && d.due == *at, || {
            format!("cue {k}.{i}: fired {} due {} expected {at}", d.fired_at, d.due)
        })?;
    }

    let real = play_story(false)?;
    ensure(real.len() == expected.len(), || format!("real: {} of {} cues", real.len(), expected.len()))?;
    let mut errs: Vec<f64> = real
        .iter()
        .map(|d| (d.fired_at.0 as f64 - d.due.0 as f64).abs() / 1e6)
        .collect();
    errs.sort_by(f64::total_cmp);
    let within = errs.iter().filter(|e| **e <= 50.0).count();
    let need = (errs.len() * 95).div_ceil(100);
    ensure(within >= need, || format!("real clock: {within}/{} within 50 ms ({errs:?})", errs.len()))?;
    Ok(format!(
        "virtual: {} cues exact; real: {within}/{} within 50 ms, worst {:.2} ms",
        virt.len(),
        errs.len(),
        errs.last().copied().unwrap_or(0.0)
    ))
}

// Story state machine -----------------------------------------------------------

fn chunk_of(p: &StoryPhase) -> Option<usize> {
    match p {
        StoryPhase::Narrating { chunk } | StoryPhase::Paused { chunk } => Some(*chunk),
        _ => None,
    }
}

/// Transition relation of a story with `n` chunks, from its behavioural
/// description.
fn story_legal(n: usize, from: &StoryPhase, input: &StoryInput, to: &StoryPhase) -> bool {
    use StoryPhase::*;
    match (from, input, to) {
        (Idle, StoryInput::Start, Narrating { chunk: 0 }) => true,
        (Narrating { chunk: i }, StoryInput::SpeakSucceeded, Narrating { chunk: j }) => *j == i + 1 && *j < n,
        (Narrating { chunk: i }, StoryInput::SpeakSucceeded, Complete) => *i == n - 1,
        (Narrating { .. }, StoryInput::SpeakFailed(_), Aborted { .. }) => true,
        (Narrating { .. }, StoryInput::Pause, Paused { .. }) => chunk_of(from) == chunk_of(to),
        (Paused { .. }, StoryInput::Resume, Narrating { .. }) => chunk_of(from) == chunk_of(to),
        (Narrating { .. } | Paused { .. }, StoryInput::Abort(_), Aborted { .. }) => true,
        _ => false,
    }
}

fn story_machine() -> Check {
    let n = 3;
    let inputs = [
        StoryInput::Start,
        StoryInput::SpeakSucceeded,
        StoryInput::SpeakFailed("tts".into()),
        StoryInput::Pause,
        StoryInput::Resume,
        StoryInput::Abort("operator".into()),
    ];
    // Every interleaving of up to `depth` events, pause/resume/abort included
    // at every state.
    let depth = 8;
    let mut frontier = vec![StoryMachine::new(n)];
    let mut sequences = 0u64;
    let mut states = BTreeSet::new();
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * inputs.len());
        for m in &frontier {
            states.insert(format!("{:?}", m.phase()));
            for input in &inputs {
                let mut m2 = m.clone();
                sequences += 1;
                match m2.handle(input.clone()) {
                    Ok(_) => {
                        if !story_legal(n, m.phase(), input, m2.phase()) {
                            return Err(format!("illegal {:?} --{input:?}--> {:?}", m.phase(), m2.phase()));
                        }
                        if !m2.phase().is_terminal() {
                            next.push(m2);
                        } else {
                            states.insert(format!("{:?}", m2.phase()));
                        }
                    }
                    Err(r) => {
                        ensure(m2 == *m && r.phase == *m.phase(), || "rejected input changed state".into())?;
                        if inputs.iter().any(|i| i == input) && story_legal_any(n, m.phase(), input) {
                            return Err(format!("legal {input:?} refused in {:?}", m.phase()));
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    // idle, narrating 0..2, paused 0..2, complete and aborted (two causes).
    ensure(states.len() >= 9, || format!("only {} states reached", states.len()))?;
    Ok(format!("{sequences} transitions over all {depth}-event interleavings, {} states, none illegal", states.len()))
}

/// Whether the relation allows some successor for `input` in `from`.
fn story_legal_any(n: usize, from: &StoryPhase, input: &StoryInput) -> bool {
    let mut candidates = vec![StoryPhase::Idle, StoryPhase::Complete, StoryPhase::Aborted { cause: String::new() }];
    for c in 0..n {
        candidates.push(StoryPhase::Narrating { chunk: c });
        candidates.push(StoryPhase::Paused { chunk: c });
    }
    candidates.iter().any(|to| story_legal(n, from, input, to))
}

// Coaching template ---------------------------------------------------------------

fn coach_week(root: &Path) -> Result<(String, Vec<Vec<Phase>>), String> {
    let turns: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(assets().join("coach/turns.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let mut trace = String::new();
    let mut phases = Vec::new();
    let mut progress = [false; 5];
    for day in 1..=5u8 {
        let opts = RunOptions {
            virtual_time: true,
            record: true,
            ..RunOptions::default()
        };
        let mut p = Platform::build(config_at(root), opts).map_err(|e| e.to_string())?;
        let generator = MockGenerator::new(&p.library).map_err(|e| e.to_string())?;
        let co = CoachOptions {
            session_id: p.session_id.clone(),
            day,
            progress,
            policy: PhasePolicy::default(),
        };
        let (node, coach) =
            Shared::new(CoachNode::new(&p.bus, p.library.clone(), Box::new(generator), co).map_err(|e| e.to_string())?);
        p.add(node);
        p.add(ScriptedUser::new(&p.bus, turns.clone(), Nanos::from_millis(500)).map_err(|e| e.to_string())?);
        let deadline = p.bus.now() + Nanos::from_secs_f64(600.0);
        p.executor.run_while(Some(deadline), || !coach.lock().unwrap().is_done());
        let c = coach.lock().unwrap();
        ensure(c.state().closed && c.failure().is_none(), || format!("day {day} did not close"))?;
        progress = c.state().progress;
        let mut seen = c.trace().to_vec();
        seen.dedup();
        phases.push(seen);
        drop(c);
        let s = p.finish().map_err(|e| e.to_string())?.ok_or("not recording")?;
        for part in part_files(&s.dir).map_err(|e| e.to_string())? {
            let text = std::fs::read_to_string(&part).map_err(|e| e.to_string())?;
            for line in text.lines().filter(|l| l.contains("\"stream\":\"/m/coach/events\"")) {
                trace.push_str(line);
                trace.push('\n');
            }
        }
    }
    Ok((trace, phases))
}

fn coaching_template() -> Check {
    let (a, b) = (tempdir(), tempdir());
    let (ta, pa) = coach_week(a.path())?;
    let (tb, _) = coach_week(b.path())?;
    ensure(!ta.is_empty(), || "empty trace".into())?;
    ensure(ta == tb, || "session traces differ between runs".into())?;
    let want = [Phase::Greeting, Phase::Practice, Phase::FollowUp, Phase::Closing];
    for (d, p) in pa.iter().enumerate() {
        ensure(p == &want, || format!("day {} phases {p:?}", d + 1))?;
    }
    Ok(format!("5 sessions, {} trace bytes identical, every day greeting→practice→follow_up→closing", ta.len()))
}

// Perception --------------------------------------------------------------------

fn perception() -> Check {
    let cfg = PresenceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9E);
    // Direct: enter, then oscillate strictly between the thresholds.
    let mut entered_total = 0;
    for trial in 0..200 {
        let mut s = PresenceState::default();
        let mut events = Vec::new();
        let (lo, hi) = (cfg.t_lo, cfg.t_hi);
        let mid = 0.5 * (lo + hi);
        let amp = 0.5 * (hi - lo) * rng.random_range(0.1..0.99);
        let period = rng.random_range(2.0..40.0);
        let mut trace: Vec<f64> = vec![1.0; 12];
        trace.extend((0..2000).map(|k| mid + amp * (std::f64::consts::TAU * k as f64 / period).sin()));
        for (k, e) in trace.iter().enumerate() {
            let (n, ev) = presence_update(&cfg, s, *e, Nanos::from_millis(100 * k as u64));
            s = n;
            events.extend(ev);
        }
        ensure(events.len() == 1, || format!("trial {trial}: events {events:?}"))?;
        entered_total += 1;
    }
    // End to end through the sim and perception node.
    let root = tempdir();
    let mut events = vec![m_core::sim::TimedEvent {
        t: 0.5,
        event: m_core::sim::ScenarioEvent::RadarEnergy { value: 1.0 },
    }];
    for k in 0..120 {
        let v = if k % 2 == 0 { cfg.t_lo + 0.01 } else { cfg.t_hi - 0.01 };
        events.push(m_core::sim::TimedEvent {
            t: 2.0 + 0.25 * k as f64,
            event: m_core::sim::ScenarioEvent::RadarEnergy { value: v },
        });
    }
    let opts = RunOptions {
        virtual_time: true,
        scenario: Scenario { name: "oscillate".into(), events },
        ..RunOptions::default()
    };
    let mut p = Platform::build(config_at(root.path()), opts).map_err(|e| e.to_string())?;
    let presence = p.bus.subscribe_with_capacity(&ifaces::presence(), 1024).map_err(|e| e.to_string())?;
    p.run_until(Some(Nanos::from_secs_f64(35.0)));
    let ev: Vec<String> = presence.drain().iter().map(|e| e.payload["event"].to_string()).collect();
    ensure(ev == ["\"entered\""], || format!("sim presence events {ev:?}"))?;

    // Touch: each contact episode is one tap or one hold pair.
    let tcfg = TouchConfig::default();
    let mut c = TouchClassifier::new(tcfg);
    let mut t = 0u64;
    let (mut taps, mut holds) = (0, 0);
    for ep in 0..2000 {
        t += rng.random_range(1..2000);
        let len_ms: u64 = match rng.random_range(0..4) {
            0 => rng.random_range(1..3000),
            // Near the hold threshold.
            _ => (tcfg.t_hold * 1000.0) as u64 + rng.random_range(0..5) - 2,
        };
        let pad = ["head", "body", "left", "right"][rng.random_range(0..4)];
        c.touch_update(pad, true, Nanos::from_millis(t)).map_err(|e| e.to_string())?;
        let mut got = Vec::new();
        for _ in 0..rng.random_range(0..3) {
            got.extend(c.poll(Nanos::from_millis(t + rng.random_range(0..=len_ms))));
        }
        t += len_ms;
        got.extend(c.touch_update(pad, false, Nanos::from_millis(t)).map_err(|e| e.to_string())?);
        let kinds: Vec<TouchKind> = got.iter().map(|e| e.kind).collect();
        // Oracle: contacts shorter than the hold threshold are taps.
        let want: &[TouchKind] = if (len_ms as f64) < tcfg.t_hold * 1000.0 {
            taps += 1;
            &[TouchKind::Tap]
        } else {
            holds += 1;
            &[TouchKind::HoldStart, TouchKind::HoldEnd]
        };
        ensure(kinds == want, || format!("episode {ep} ({len_ms} ms): {kinds:?}"))?;
    }
    Ok(format!("{entered_total} oscillating traces and the sim run each entered once; {taps} taps, {holds} hold pairs"))
}

// Logging -----------------------------------------------------------------------

fn record_scenario(root: &Path, id: &str) -> Result<PathBuf, String> {
    let opts = RunOptions {
        virtual_time: true,
        scenario: bundled_scenario(),
        record: true,
        session_id: Some(id.into()),
    };
    let mut p = Platform::build(config_at(root), opts).map_err(|e| e.to_string())?;
    p.run_until(Some(Nanos::from_secs_f64(bundled_scenario().end() + 3.0)));
    Ok(p.finish().map_err(|e| e.to_string())?.ok_or("not recording")?.dir)
}

fn publish_rate(bus: &Bus, iface: &InterfaceName, span: Duration) -> f64 {
    let publ = bus.publisher(iface).unwrap();
    let start = Instant::now();
    let mut n = 0u64;
    while start.elapsed() < span {
        for _ in 0..64 {
            publ.publish(json!({"energy": 0.5})).unwrap();
        }
        n += 64;
    }
    n as f64 / start.elapsed().as_secs_f64()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn logging() -> Check {
    let root = tempdir();
    let dir = record_scenario(root.path(), "orig")?;
    let orig = read_session(&dir, Strictness::Strict).map_err(|e| e.to_string())?;

    // Round trip.
    let bus = Bus::new(Arc::new(VirtualClock::new()));
    register_streams(&orig, &bus).map_err(|e| e.to_string())?;
    let streams = orig.streams.values().cloned().collect();
    let mut rec = Recorder::start(&bus, &root.path().join("again"), RecorderOptions::new("orig", streams))
        .map_err(|e| e.to_string())?;
    replay(&orig, &bus, ReplaySpeed::AsFastAsPossible, |now| rec.poll(now).map(|_| ())).map_err(|e| e.to_string())?;
    let again = read_session(&rec.finish().map_err(|e| e.to_string())?.dir, Strictness::Strict)
        .map_err(|e| e.to_string())?;
    // The second recorder adds nothing of its own: system events it emits
    // during replay would show up here.
    ensure(again.content_multiset() == orig.content_multiset(), || {
        format!("multisets differ: {} vs {} records", orig.records.len(), again.records.len())
    })?;

    // Truncation at many byte offsets.
    let part = dir.join("part-0000.jsonl");
    let bytes = std::fs::read(&part).map_err(|e| e.to_string())?;
    let header_end = bytes.iter().position(|&b| b == b'\n').ok_or("no header line")? + 1;
    let mut cuts = 0;
    for cut in (header_end..bytes.len()).step_by((bytes.len() - header_end) / 150 + 1) {
        let kept = &bytes[..cut];
        std::fs::write(&part, kept).map_err(|e| e.to_string())?;
        // Oracle: records are the newline-terminated lines after the header.
        let complete_lines = kept.iter().filter(|&&b| b == b'\n').count();
        let expect = complete_lines.saturating_sub(1);
        let log = read_session(&dir, Strictness::Lenient).map_err(|e| format!("cut {cut}: {e}"))?;
        let n = log.records.len();
        // A cut just before a newline leaves one complete JSON record.
        ensure(n == expect || n == expect + 1, || format!("cut {cut}: {n} records, expected {expect}"))?;
        ensure(log.records[..] == orig.records[..n], || format!("cut {cut}: recovered records differ"))?;
        match read_session(&dir, Strictness::Strict) {
            Ok(strict) => ensure(strict.records.len() == n, || format!("cut {cut}: strict read {} records", strict.records.len()))?,
            Err(m_core::LogError::CorruptLog { last_valid, .. }) => {
                let want = n.checked_sub(1).map(|k| orig.records[k].locator());
                ensure(last_valid == want, || format!("cut {cut}: last valid {last_valid:?}, expected {want:?}"))?;
            }
            Err(e) => return Err(format!("cut {cut}: {e}")),
        }
        cuts += 1;
    }
    std::fs::write(&part, &bytes).map_err(|e| e.to_string())?;

    // Health polling overhead on publish throughput.
    let bus = Bus::new(m_core::clock::RealClock::shared());
    let r = ifaces::radar_energy();
    bus.register(&r, "acceptance").map_err(|e| e.to_string())?;
    let _sub = bus.subscribe_with_capacity(&r, 1024).map_err(|e| e.to_string())?;
    let span = Duration::from_millis(100);
    publish_rate(&bus, &r, span);
    let (mut base, mut loaded) = (Vec::new(), Vec::new());
    let mut polls = 0u64;
    for _ in 0..15 {
        base.push(publish_rate(&bus, &r, span));
        let stop = AtomicBool::new(false);
        let rate = std::thread::scope(|sc| {
            let poller = sc.spawn(|| {
                let mut n = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    // What a /health request does: snapshot and serialize.
                    let _ = serde_json::to_string(&health(&bus, DEFAULT_LIVENESS));
                    n += 1;
                    std::thread::sleep(Duration::from_millis(10));
                }
                n
            });
            let rate = publish_rate(&bus, &r, span);
            stop.store(true, Ordering::Relaxed);
            polls += poller.join().unwrap();
            rate
        });
        loaded.push(rate);
    }
    let (b, l) = (median(base), median(loaded));
    let delta = (b - l) / b;
    ensure(delta < 0.01, || format!("health polling cut throughput by {:.2}% ({b:.0} -> {l:.0} msg/s)", delta * 100.0))?;
    Ok(format!(
        "{} records round-tripped; {cuts} truncations recovered and located; health at ~100 Hz ({polls} polls) delta {:+.2}%",
        orig.records.len(),
        delta * 100.0
    ))
}

// Determinism -------------------------------------------------------------------

fn joint_state_lines(dir: &Path) -> Result<String, String> {
    let mut out = String::new();
    for part in part_files(dir).map_err(|e| e.to_string())? {
        let text = std::fs::read_to_string(&part).map_err(|e| e.to_string())?;
        for l in text.lines().filter(|l| l.contains("\"stream\":\"/m/joint_states\"")) {
            out.push_str(l);
            out.push('\n');
        }
    }
    Ok(out)
}

fn determinism() -> Check {
    let (a, b) = (tempdir(), tempdir());
    let la = joint_state_lines(&record_scenario(a.path(), "run")?)?;
    let lb = joint_state_lines(&record_scenario(b.path(), "run")?)?;
    ensure(!la.is_empty(), || "no joint_states recorded".into())?;
    ensure(la == lb, || "joint_states logs differ".into())?;
    Ok(format!("{} joint_states records byte-identical", la.lines().count()))
}

// Harness -----------------------------------------------------------------------

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Check); 10] = [
        ("interface equivalence", Some(Duration::from_secs(1)), interface_equivalence),
        ("bus properties", Some(Duration::from_secs(30)), bus_properties),
        ("expression math", None, expression_math),
        ("servo model", None, servo_model),
        ("cue timing", None, cue_timing),
        ("story state machine", Some(Duration::from_secs(10)), story_machine),
        ("coaching template", None, coaching_template),
        ("perception", None, perception),
        ("logging round trip", None, logging),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let t = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = t.elapsed();
        let r = match (r, limit) {
            (Ok(_), Some(l)) if took >= l => Err(format!("took {took:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match r {
            Ok(detail) => println!("PASS {name} [{took:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} [{took:.2?}]: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
