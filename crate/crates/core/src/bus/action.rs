//! Long-running, interruptible operations.
//!
//! A goal's status is owned by a single mutex-guarded history, so every path
//! (server completion, client cancel, preemption by a newer goal) goes through
//! one transition function and at most one terminal status can ever be
//! recorded.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BusError, Envelope, InterfaceName};
use crate::clock::SharedClock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    Pending,
    Active,
    Succeeded,
    Canceled,
    Aborted,
    Preempted,
}

impl GoalStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, GoalStatus::Pending | GoalStatus::Active)
    }

    fn can_become(self, to: GoalStatus) -> bool {
        match (self, to) {
            (GoalStatus::Pending, GoalStatus::Active) => true,
            (GoalStatus::Pending | GoalStatus::Active, t) => t.is_terminal(),
            _ => false,
        }
    }
}

/// How a server treats a goal that arrives while another is running.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalPolicy {
    /// New goal preempts the running one.
    #[default]
    Preempt,
    /// New goal fails with `ServerBusy`.
    Reject,
    /// New goal waits (pending) until the running one finishes.
    Queue,
    /// Goals run side by side.
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub u64);

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "goal#{}", self.0)
    }
}

pub(crate) type GoalHandler = Arc<dyn Fn(ServerGoal) + Send + Sync>;

pub(crate) struct ActionSlot {
    pub(crate) policy: GoalPolicy,
    pub(crate) handler: Mutex<Option<GoalHandler>>,
    state: Mutex<SlotState>,
}

#[derive(Default)]
struct SlotState {
    running: Vec<Arc<GoalShared>>,
    queued: VecDeque<Arc<GoalShared>>,
}

impl ActionSlot {
    pub(crate) fn new(policy: GoalPolicy) -> Self {
        Self {
            policy,
            handler: Mutex::new(None),
            state: Mutex::new(SlotState::default()),
        }
    }

    pub(crate) fn submit(self: &Arc<Self>, goal: Arc<GoalShared>) -> Result<(), BusError> {
        let handler = self
            .handler
            .lock()
            .unwrap()
            .clone()
            .ok_or_else(|| BusError::UnknownInterface {
                path: goal.iface.path.clone(),
                kind: goal.iface.kind,
            })?;
        let mut preempted = Vec::new();
        let dispatch_now = {
            let mut st = self.state.lock().unwrap();
            match self.policy {
                GoalPolicy::Parallel => {
                    st.running.push(goal.clone());
                    true
                }
                GoalPolicy::Preempt => {
                    preempted.extend(st.running.drain(..));
                    preempted.extend(st.queued.drain(..));
                    st.running.push(goal.clone());
                    true
                }
                GoalPolicy::Reject => {
                    if st.running.is_empty() {
                        st.running.push(goal.clone());
                        true
                    } else {
                        return Err(BusError::ServerBusy(goal.iface.path.clone()));
                    }
                }
                GoalPolicy::Queue => {
                    if st.running.is_empty() {
                        st.running.push(goal.clone());
                        true
                    } else {
                        st.queued.push_back(goal.clone());
                        false
                    }
                }
            }
        };
        for old in preempted {
            // Already-terminal goals are simply skipped.
            let _ = old.transition(GoalStatus::Preempted, None, None);
        }
        if dispatch_now {
            handler(ServerGoal { shared: goal });
        }
        Ok(())
    }

    fn on_terminal(&self, goal: &Arc<GoalShared>) {
        let next = {
            let mut st = self.state.lock().unwrap();
            st.running.retain(|g| !Arc::ptr_eq(g, goal));
            st.queued.retain(|g| !Arc::ptr_eq(g, goal));
            if self.policy == GoalPolicy::Queue && st.running.is_empty() {
                let next = st.queued.pop_front();
                if let Some(n) = &next {
                    st.running.push(n.clone());
                }
                next
            } else {
                None
            }
        };
        if let Some(next) = next {
            let handler = self.handler.lock().unwrap().clone();
            if let Some(h) = handler {
                h(ServerGoal { shared: next });
            }
        }
    }
}

pub(crate) struct GoalShared {
    pub(crate) id: GoalId,
    pub(crate) iface: InterfaceName,
    pub(crate) goal: Value,
    clock: SharedClock,
    inner: Mutex<GoalInner>,
    changed: Condvar,
    slot: Weak<ActionSlot>,
    feedback_capacity: usize,
}

struct GoalInner {
    history: Vec<GoalStatus>,
    feedback: VecDeque<Envelope>,
    last_feedback: Option<Envelope>,
    feedback_seq: u64,
    feedback_dropped: u64,
    result: Option<Value>,
    reason: Option<String>,
}

impl GoalShared {
    pub(crate) fn new(
        id: GoalId,
        iface: InterfaceName,
        goal: Value,
        clock: SharedClock,
        slot: &Arc<ActionSlot>,
        feedback_capacity: usize,
    ) -> Arc<Self> {
        Arc::new(Self {
            id,
            iface,
            goal,
            clock,
            inner: Mutex::new(GoalInner {
                history: vec![GoalStatus::Pending],
                feedback: VecDeque::new(),
                last_feedback: None,
                feedback_seq: 0,
                feedback_dropped: 0,
                result: None,
                reason: None,
            }),
            changed: Condvar::new(),
            slot: Arc::downgrade(slot),
            feedback_capacity,
        })
    }

    fn status(&self) -> GoalStatus {
        *self.inner.lock().unwrap().history.last().expect("history is never empty")
    }

    fn transition(
        self: &Arc<Self>,
        to: GoalStatus,
        result: Option<Value>,
        reason: Option<String>,
    ) -> Result<(), BusError> {
        {
            let mut g = self.inner.lock().unwrap();
            let from = *g.history.last().expect("history is never empty");
            if !from.can_become(to) {
                return Err(if from.is_terminal() {
                    BusError::GoalFinished(self.id.0)
                } else {
                    BusError::IllegalTransition { from, to }
                });
            }
            g.history.push(to);
            if to.is_terminal() {
                g.result = result;
                g.reason = reason;
            }
        }
        self.changed.notify_all();
        if to.is_terminal() {
            if let Some(slot) = self.slot.upgrade() {
                slot.on_terminal(self);
            }
        }
        Ok(())
    }

    fn push_feedback(&self, payload: Value) -> Result<(), BusError> {
        let mut g = self.inner.lock().unwrap();
        let status = *g.history.last().expect("history is never empty");
        if status.is_terminal() {
            return Err(BusError::GoalFinished(self.id.0));
        }
        g.feedback_seq += 1;
        let env = Envelope {
            interface: self.iface.clone(),
            seq: g.feedback_seq,
            t_mono: self.clock.now(),
            t_wall: self.clock.wall_ns(),
            payload,
        };
        if g.feedback.len() == self.feedback_capacity {
            g.feedback.pop_front();
            g.feedback_dropped += 1;
        }
        g.feedback.push_back(env.clone());
        g.last_feedback = Some(env);
        drop(g);
        self.changed.notify_all();
        Ok(())
    }
}

/// Server-side view of a goal.
#[derive(Clone)]
pub struct ServerGoal {
    shared: Arc<GoalShared>,
}

impl ServerGoal {
    pub fn id(&self) -> GoalId {
        self.shared.id
    }

    pub fn goal(&self) -> &Value {
        &self.shared.goal
    }

    pub fn status(&self) -> GoalStatus {
        self.shared.status()
    }

    pub fn is_terminal(&self) -> bool {
        self.status().is_terminal()
    }

    pub fn accept(&self) -> Result<(), BusError> {
        self.shared.transition(GoalStatus::Active, None, None)
    }

    pub fn feedback(&self, payload: Value) -> Result<(), BusError> {
        self.shared.push_feedback(payload)
    }

    pub fn succeed(&self, result: Value) -> Result<(), BusError> {
        self.shared.transition(GoalStatus::Succeeded, Some(result), None)
    }

    pub fn abort(&self, reason: &str) -> Result<(), BusError> {
        self.shared
            .transition(GoalStatus::Aborted, None, Some(reason.to_owned()))
    }

    /// Marks the goal displaced by other work on the server side.
    pub fn preempt(&self) -> Result<(), BusError> {
        self.shared.transition(GoalStatus::Preempted, None, None)
    }
}

impl fmt::Debug for ServerGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerGoal")
            .field("id", &self.shared.id)
            .field("iface", &self.shared.iface.path)
            .field("status", &self.status())
            .finish()
    }
}

/// Client-side handle to a goal. Cheap to clone and safe to move between
/// threads.
#[derive(Clone)]
pub struct ActionHandle {
    shared: Arc<GoalShared>,
}

impl ActionHandle {
    pub(crate) fn new(shared: Arc<GoalShared>) -> Self {
        Self { shared }
    }

    pub fn id(&self) -> GoalId {
        self.shared.id
    }

    pub fn interface(&self) -> &InterfaceName {
        &self.shared.iface
    }

    pub fn status(&self) -> GoalStatus {
        self.shared.status()
    }

    pub fn is_terminal(&self) -> bool {
        self.status().is_terminal()
    }

    /// Every status the goal has been in, oldest first.
    pub fn history(&self) -> Vec<GoalStatus> {
        self.shared.inner.lock().unwrap().history.clone()
    }

    /// Requests cancellation. The goal becomes `canceled` immediately unless it
    /// already reached a terminal status.
    pub fn cancel(&self) -> Result<(), BusError> {
        self.shared.transition(GoalStatus::Canceled, None, None)
    }

    pub fn try_feedback(&self) -> Option<Envelope> {
        self.shared.inner.lock().unwrap().feedback.pop_front()
    }

    pub fn drain_feedback(&self) -> Vec<Envelope> {
        self.shared.inner.lock().unwrap().feedback.drain(..).collect()
    }

    pub fn last_feedback(&self) -> Option<Envelope> {
        self.shared.inner.lock().unwrap().last_feedback.clone()
    }

    pub fn feedback_dropped(&self) -> u64 {
        self.shared.inner.lock().unwrap().feedback_dropped
    }

    pub fn result(&self) -> Option<Value> {
        self.shared.inner.lock().unwrap().result.clone()
    }

    pub fn failure_reason(&self) -> Option<String> {
        self.shared.inner.lock().unwrap().reason.clone()
    }

    /// Blocks (in real time) until the goal is terminal or `timeout` elapses.
    pub fn wait(&self, timeout: Duration) -> Option<GoalStatus> {
        let deadline = Instant::now() + timeout;
        let mut g = self.shared.inner.lock().unwrap();
        loop {
            let s = *g.history.last().expect("history is never empty");
            if s.is_terminal() {
                return Some(s);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            g = self.shared.changed.wait_timeout(g, deadline - now).unwrap().0;
        }
    }
}

impl fmt::Debug for ActionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionHandle")
            .field("id", &self.shared.id)
            .field("iface", &self.shared.iface.path)
            .field("status", &self.status())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::GoalStatus::*;

    #[test]
    fn transition_relation() {
        assert!(Pending.can_become(Active));
        assert!(Pending.can_become(Canceled));
        assert!(Active.can_become(Succeeded));
        assert!(!Active.can_become(Pending));
        assert!(!Active.can_become(Active));
        for t in [Succeeded, Canceled, Aborted, Preempted] {
            assert!(t.is_terminal());
            for to in [Pending, Active, Succeeded, Canceled, Aborted, Preempted] {
                assert!(!t.can_become(to));
            }
        }
    }
}
