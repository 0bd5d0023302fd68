//! Platform-hosting commands: `sim run`, `story play` and `coach run`.

use std::path::Path;
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use anyhow::Context;
use serde_json::json;

use m_core::bus::{GoalStatus, Subscription};
use m_core::clock::Nanos;
use m_core::config::{LoadedConfig, PlatformConfig};
use m_core::ifaces;
use m_core::interact::{
    CoachNode, CoachOptions, HttpGenerator, MockGenerator, PhasePolicy, ResponseGenerator, ScriptedUser, StoryNode,
    StoryScript, WithFallback, DAYS,
};
use m_core::logkit::RecorderSummary;
use m_core::platform::{Platform, RunOptions};
use m_core::runtime::Shared;
use m_core::sim::Scenario;

use crate::exit::{fail, ABORTED, INVALID, OK, USAGE};
use crate::server::{self, AppState};
use crate::{Hosting, SimRun};

const BUNDLED_TURNS: &str = include_str!("../../core/assets/coach/turns.json");
/// Pause between a robot reply ending and the next scripted user turn.
const USER_DELAY: Nanos = Nanos(500_000_000);
const HTTP_TIMEOUT: Duration = Duration::from_secs(5);
/// Presence needs this long after the last scenario event to settle.
const SCENARIO_TAIL: f64 = 3.0;

pub(crate) fn load_config(path: Option<&Path>) -> anyhow::Result<LoadedConfig> {
    match path {
        Some(p) => Ok(PlatformConfig::load(p)?),
        None => Ok(PlatformConfig::default().in_memory()),
    }
}

fn print_events(sub: &Subscription) {
    for env in sub.drain() {
        println!(
            "{:>10.3} {} {}",
            env.t_mono.as_secs_f64(),
            env.payload["event"].as_str().unwrap_or("?"),
            env.payload["detail"]
        );
    }
}

fn print_summary(s: Option<RecorderSummary>) {
    if let Some(s) = s {
        println!("session {} ({} records) in {}", s.session.session_id, s.records, s.dir.display());
    }
}

pub fn sim_run(a: &SimRun) -> anyhow::Result<i32> {
    let mut config = PlatformConfig::load(&a.config)?;
    if let Some(port) = a.port {
        config.config.port = port;
    }
    let scenario = match &a.scenario {
        Some(p) => Scenario::load(p).map_err(|e| fail(INVALID, e))?,
        None => Scenario::default(),
    };
    let end = a.duration.unwrap_or(scenario.end() + SCENARIO_TAIL);
    if !(end.is_finite() && end >= 0.0) {
        return Err(fail(USAGE, format!("duration {end} must be >= 0")));
    }
    let opts = RunOptions {
        virtual_time: a.virtual_time,
        scenario,
        record: true,
        session_id: None,
    };
    let mut p = Platform::build(config, opts)?;
    println!("session {}", p.session_id);
    if a.virtual_time {
        p.run_until(Some(Nanos::from_secs_f64(end)));
        print_summary(p.finish()?);
        return Ok(OK);
    }

    let state = AppState {
        bus: p.bus.clone(),
        hub: p.twin.clone(),
    };
    let app = server::router(state, p.config.config.static_dir.as_deref());
    let stop = p.executor.stop_flag();
    let deadline = a.duration.map(Duration::from_secs_f64);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let addr = (p.config.config.bind.clone(), p.config.config.port);
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(addr.clone()))
        .with_context(|| format!("binding {}:{}", addr.0, addr.1))?;
    println!("listening on http://{}", listener.local_addr()?);
    let exec = std::thread::Builder::new().name("executor".into()).spawn(move || {
        p.run_until(None);
        p
    })?;
    let served = rt.block_on(async move {
        let until = async {
            match deadline {
                Some(d) => tokio::time::sleep(d).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            r = axum::serve(listener, app) => r.context("http server"),
            _ = tokio::signal::ctrl_c() => Ok(()),
            _ = until => Ok(()),
        }
    });
    stop.store(true, Ordering::Relaxed);
    rt.shutdown_timeout(Duration::from_millis(500));
    let mut p = exec.join().map_err(|_| anyhow::anyhow!("executor thread panicked"))?;
    print_summary(p.finish()?);
    served.map(|_| OK)
}

fn run_options(h: &Hosting) -> RunOptions {
    RunOptions {
        virtual_time: h.virtual_time,
        record: true,
        ..RunOptions::default()
    }
}

pub fn story_play(script: &Path, h: &Hosting) -> anyhow::Result<i32> {
    let started = Instant::now();
    let config = load_config(h.config.as_deref())?;
    let story = StoryScript::load(script)?;
    let mut p = Platform::build(config, run_options(h))?;
    story.validate(Some(&p.library))?;
    let events = p.bus.subscribe_with_capacity(&ifaces::story_events(), 4096)?;
    let (node, _) = Shared::new(StoryNode::new(&p.bus, p.library.clone())?);
    p.add(node);
    let goal = p.bus.send_goal(&ifaces::story_play(), json!({ "script": story }))?;
    let span: f64 = story.chunks.iter().map(|c| c.duration).sum();
    let deadline = p.bus.now() + Nanos::from_secs_f64(2.0 * span + 10.0);
    p.executor.run_while(Some(deadline), || !goal.is_terminal());
    if !goal.is_terminal() {
        let _ = goal.cancel();
        p.executor.settle();
    }
    print_events(&events);
    print_summary(p.finish()?);
    log::info!("story finished in {:?} wall time", started.elapsed());
    match goal.status() {
        GoalStatus::Succeeded => Ok(OK),
        s => {
            println!("story ended {s:?}: {}", goal.failure_reason().unwrap_or_default());
            Ok(ABORTED)
        }
    }
}

fn generator(spec: &str, p: &Platform) -> anyhow::Result<Box<dyn ResponseGenerator>> {
    if spec == "mock" {
        return Ok(Box::new(MockGenerator::new(&p.library)?));
    }
    let Some(rest) = spec.strip_prefix("http:") else {
        return Err(fail(INVALID, format!("unknown generator {spec:?} (expected mock or http:<url>)")));
    };
    // Both `http:host:port/path` and `http:http://host/path` are accepted.
    let url = if rest.starts_with("//") {
        format!("http:{rest}")
    } else if rest.starts_with("http://") || rest.starts_with("https://") {
        rest.to_owned()
    } else {
        format!("http://{rest}")
    };
    let http = HttpGenerator::new(&url, HTTP_TIMEOUT)?;
    Ok(Box::new(WithFallback::new(http, p.library.clone())?))
}

pub fn coach_run(spec: &str, day: u8, turns: Option<&Path>, h: &Hosting) -> anyhow::Result<i32> {
    if !(1..=DAYS).contains(&day) {
        return Err(fail(INVALID, format!("day {day} is outside 1..={DAYS}")));
    }
    let text = match turns {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| fail(USAGE, format!("cannot read turns file {}: {e}", path.display())))?,
        None => BUNDLED_TURNS.to_owned(),
    };
    let turns: Vec<String> = serde_json::from_str(&text).map_err(|e| fail(INVALID, format!("turns file: {e}")))?;
    let config = load_config(h.config.as_deref())?;
    let mut p = Platform::build(config, run_options(h))?;
    let events = p.bus.subscribe_with_capacity(&ifaces::coach_events(), 4096)?;
    let mut progress = [false; DAYS as usize];
    progress.iter_mut().take(usize::from(day) - 1).for_each(|d| *d = true);
    let opts = CoachOptions {
        session_id: p.session_id.clone(),
        day,
        progress,
        policy: PhasePolicy::default(),
    };
    let generator = generator(spec, &p)?;
    let (node, coach) = Shared::new(CoachNode::new(&p.bus, p.library.clone(), generator, opts)?);
    p.add(node);
    p.add(ScriptedUser::new(&p.bus, turns, USER_DELAY)?);
    // Generous bound: every turn at its longest plausible length.
    let deadline = p.bus.now() + Nanos::from_secs_f64(600.0);
    p.executor.run_while(Some(deadline), || !coach.lock().unwrap().is_done());
    print_events(&events);
    let c = coach.lock().unwrap();
    let mut trace: Vec<&str> = c.trace().iter().map(|ph| ph.as_str()).collect();
    trace.dedup();
    println!("trace {}", trace.join(" "));
    let code = match (c.failure(), c.state().closed) {
        (None, true) => OK,
        (Some(e), _) => {
            println!("session failed: {e}");
            ABORTED
        }
        (None, false) => {
            println!("session ended before closing");
            ABORTED
        }
    };
    drop(c);
    print_summary(p.finish()?);
    Ok(code)
}
