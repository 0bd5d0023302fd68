//! Single-context discrete-event executor.
//!
//! Nodes are stepped in registration order until a full pass does no work,
//! then the executor waits for the earliest requested wake time. Under a
//! virtual clock the wait is a jump, so every wake happens at exactly the
//! requested instant.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::bus::Bus;
use crate::clock::{Nanos, SharedClock, VirtualClock};

/// Upper bound on a real-time sleep, so nodes fed from other threads are
/// polled at least this often.
pub const MAX_REAL_SLEEP: Duration = Duration::from_millis(5);

/// Passes per instant before the executor declares a livelock.
const MAX_PASSES: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Step {
    /// Anything observable happened (message sent, state changed).
    pub worked: bool,
    /// Earliest future instant this node needs to run again.
    pub wake: Option<Nanos>,
}

impl Step {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn wake_at(t: Nanos) -> Self {
        Self { worked: false, wake: Some(t) }
    }

    pub fn worked(mut self, w: bool) -> Self {
        self.worked |= w;
        self
    }

    pub fn also_wake(mut self, t: Option<Nanos>) -> Self {
        self.wake = earliest(self.wake, t);
        self
    }
}

pub fn earliest(a: Option<Nanos>, b: Option<Nanos>) -> Option<Nanos> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

pub trait Node: Send {
    fn name(&self) -> &str;
    fn step(&mut self, now: Nanos) -> Step;
}

/// Runs a node the caller keeps a handle to.
pub struct Shared<N> {
    node: Arc<std::sync::Mutex<N>>,
    name: String,
}

impl<N: Node> Shared<N> {
    pub fn new(node: N) -> (Self, Arc<std::sync::Mutex<N>>) {
        let name = node.name().to_owned();
        let h = Arc::new(std::sync::Mutex::new(node));
        (Shared { node: h.clone(), name }, h)
    }
}

impl<N: Node> Node for Shared<N> {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, now: Nanos) -> Step {
        self.node.lock().unwrap().step(now)
    }
}

/// Why [`Executor::run_until`] returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    /// The requested end instant was reached.
    Deadline,
    /// Virtual time only: no node has anything left to do.
    Quiescent,
    Stopped,
}

pub struct Executor {
    bus: Bus,
    clock: SharedClock,
    virtual_clock: Option<Arc<VirtualClock>>,
    nodes: Vec<Box<dyn Node>>,
    stop: Arc<AtomicBool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.nodes.iter().map(|n| n.name()).collect();
        f.debug_struct("Executor").field("nodes", &names).finish()
    }
}

impl Executor {
    /// `virtual_clock` must be the clock the bus runs on when present.
    pub fn new(bus: Bus, virtual_clock: Option<Arc<VirtualClock>>) -> Self {
        let clock = bus.clock().clone();
        Self {
            bus,
            clock,
            virtual_clock,
            nodes: Vec::new(),
            stop: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn add<N: Node + 'static>(&mut self, node: N) {
        self.nodes.push(Box::new(node));
    }

    pub fn add_boxed(&mut self, node: Box<dyn Node>) {
        self.nodes.push(node);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn is_virtual(&self) -> bool {
        self.virtual_clock.is_some()
    }

    /// Runs every node until quiescent at the current instant and returns the
    /// earliest future wake.
    pub fn settle(&mut self) -> Option<Nanos> {
        let now = self.clock.now();
        let mut wake = None;
        for pass in 0.. {
            assert!(pass < MAX_PASSES, "nodes never settle at {now}");
            let mut worked = false;
            wake = None;
            for n in &mut self.nodes {
                let s = n.step(now);
                worked |= s.worked;
                wake = earliest(wake, s.wake.filter(|t| *t > now));
            }
            if !worked {
                break;
            }
        }
        for n in &self.nodes {
            self.bus.heartbeat(n.name());
        }
        wake
    }

    /// Runs until the clock reaches `end` (inclusive). With `None`, a virtual
    /// run stops once nothing is scheduled and a real run stops only via the
    /// stop flag.
    pub fn run_until(&mut self, end: Option<Nanos>) -> RunOutcome {
        self.run_while(end, || true)
    }

    pub fn run_for(&mut self, span: Nanos) -> RunOutcome {
        let end = self.clock.now() + span;
        self.run_until(Some(end))
    }

    /// Like [`Executor::run_until`], also returning `Quiescent` as soon as
    /// `keep_going` is false after a settle.
    pub fn run_while<F: FnMut() -> bool>(&mut self, end: Option<Nanos>, mut keep_going: F) -> RunOutcome {
        loop {
            if self.stop.load(Ordering::Relaxed) {
                return RunOutcome::Stopped;
            }
            let wake = self.settle();
            if !keep_going() {
                return RunOutcome::Quiescent;
            }
            let now = self.clock.now();
            if end.is_some_and(|e| now >= e) {
                return RunOutcome::Deadline;
            }
            match &self.virtual_clock {
                Some(vc) => match earliest(wake, end) {
                    Some(t) => vc.set(t),
                    None => return RunOutcome::Quiescent,
                },
                None => {
                    let target = earliest(wake, end).unwrap_or(now + Nanos(MAX_REAL_SLEEP.as_nanos() as u64));
                    let gap = target.saturating_sub(now).as_duration().min(MAX_REAL_SLEEP);
                    if !gap.is_zero() {
                        std::thread::sleep(gap);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;
    use crate::clock::Clock;

    struct Ticker {
        period: Nanos,
        next: Nanos,
        seen: Arc<Mutex<Vec<Nanos>>>,
    }

    impl Node for Ticker {
        fn name(&self) -> &str {
            "ticker"
        }
        fn step(&mut self, now: Nanos) -> Step {
            let mut worked = false;
            while self.next <= now {
                self.seen.lock().unwrap().push(now);
                self.next += self.period;
                worked = true;
            }
            Step::wake_at(self.next).worked(worked)
        }
    }

    #[test]
    fn virtual_run_wakes_exactly_at_requested_instants() {
        let vc = Arc::new(VirtualClock::new());
        let bus = Bus::new(vc.clone());
        let seen: Arc<Mutex<Vec<Nanos>>> = Arc::default();
        let mut ex = Executor::new(bus, Some(vc.clone()));
        ex.add(Ticker { period: Nanos::from_millis(20), next: Nanos::ZERO, seen: seen.clone() });
        assert_eq!(ex.run_until(Some(Nanos::from_millis(100))), RunOutcome::Deadline);
        let got: Vec<u64> = seen.lock().unwrap().iter().map(|t| t.0 / 1_000_000).collect();
        assert_eq!(got, vec![0, 20, 40, 60, 80, 100]);
        assert_eq!(vc.now(), Nanos::from_millis(100));
    }

    #[test]
    fn virtual_run_without_work_is_quiescent() {
        let vc = Arc::new(VirtualClock::new());
        let mut ex = Executor::new(Bus::new(vc.clone()), Some(vc));
        assert_eq!(ex.run_until(None), RunOutcome::Quiescent);
    }

    #[test]
    fn heartbeats_are_recorded_per_node() {
        let vc = Arc::new(VirtualClock::new());
        let bus = Bus::new(vc.clone());
        let mut ex = Executor::new(bus.clone(), Some(vc));
        ex.add(Ticker { period: Nanos::from_millis(10), next: Nanos::ZERO, seen: Arc::default() });
        ex.run_until(Some(Nanos::from_millis(30)));
        assert_eq!(bus.heartbeats()["ticker"], Nanos::from_millis(30));
    }
}
