//! In-process message runtime: streaming topics, synchronous services and
//! long-running actions, plus the interface registry.
//!
//! Topic delivery fans out to bounded per-subscriber queues under the topic's
//! lock, so every subscriber sees one topic's envelopes in `seq` order. When a
//! queue is full the oldest envelope is evicted and counted.

mod action;
mod iface;
mod queue;
mod registry;
pub mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use action::{ActionHandle, GoalId, GoalPolicy, GoalStatus, ServerGoal};
pub use iface::{validate_path, InterfaceKind, InterfaceName};
pub use queue::DropOldestQueue;
pub use registry::{registry_diff, Discrepancy, InterfaceRegistry, RegistryEntry};
pub use schema::{FieldType, Schema};

use crate::clock::{Nanos, SharedClock};
use action::{ActionSlot, GoalShared};

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("unknown interface {path} ({kind})")]
    UnknownInterface { path: String, kind: InterfaceKind },
    #[error("schema mismatch on {path}: {detail}")]
    SchemaMismatch { path: String, detail: String },
    #[error("unknown schema {0}")]
    UnknownSchema(String),
    #[error("invalid interface path {0:?}")]
    InvalidInterfaceName(String),
    #[error("{0} already has a handler")]
    AlreadyServed(String),
    #[error("call to {0} timed out")]
    Timeout(String),
    #[error("handler failed: {0}")]
    HandlerError(String),
    #[error("action server {0} is busy")]
    ServerBusy(String),
    #[error("goal {0} already reached a terminal status")]
    GoalFinished(u64),
    #[error("illegal goal transition {from:?} -> {to:?}")]
    IllegalTransition { from: GoalStatus, to: GoalStatus },
}

/// A timestamped, sequence-numbered message on a named interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub interface: InterfaceName,
    pub seq: u64,
    pub t_mono: Nanos,
    /// UTC nanoseconds.
    pub t_wall: u64,
    pub payload: Value,
}

#[derive(Debug, Default)]
struct InterfaceStats {
    messages: AtomicU64,
    /// `t_mono + 1` of the latest message; zero means never.
    last_mono_plus_one: AtomicU64,
    drops: AtomicU64,
}

/// Point-in-time counters for one interface.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InterfaceStatsSnapshot {
    pub interface: InterfaceName,
    pub messages: u64,
    pub last_message: Option<Nanos>,
    pub drops: u64,
}

type SubQueue = DropOldestQueue<Envelope>;
type ServiceHandler = Arc<dyn Fn(Value) -> Result<Value, String> + Send + Sync>;

struct TopicState {
    seq: u64,
    subscribers: Vec<Weak<SubQueue>>,
}

enum EndpointKind {
    Topic(Mutex<TopicState>),
    Service(RwLock<Option<ServiceHandler>>),
    Action(Arc<ActionSlot>),
}

struct Endpoint {
    iface: InterfaceName,
    providers: Mutex<BTreeSet<String>>,
    stats: InterfaceStats,
    kind: EndpointKind,
}

struct BusInner {
    clock: SharedClock,
    started: Nanos,
    schemas: RwLock<BTreeMap<String, Schema>>,
    endpoints: RwLock<BTreeMap<(String, InterfaceKind), Arc<Endpoint>>>,
    heartbeats: Mutex<BTreeMap<String, Nanos>>,
    next_goal: AtomicU64,
    queue_capacity: usize,
}

/// Handle to the runtime. Clones share the same bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<BusInner>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bus")
            .field("interfaces", &self.inner.endpoints.read().unwrap().len())
            .finish()
    }
}

impl Bus {
    /// A bus that knows the platform's built-in schemas.
    pub fn new(clock: SharedClock) -> Self {
        Self::with_queue_capacity(clock, DEFAULT_QUEUE_CAPACITY)
    }

    pub fn with_queue_capacity(clock: SharedClock, queue_capacity: usize) -> Self {
        let started = clock.now();
        let schemas = schema::builtin()
            .into_iter()
            .map(|s| (s.id(), s))
            .collect();
        Self {
            inner: Arc::new(BusInner {
                clock,
                started,
                schemas: RwLock::new(schemas),
                endpoints: RwLock::new(BTreeMap::new()),
                heartbeats: Mutex::new(BTreeMap::new()),
                next_goal: AtomicU64::new(1),
                queue_capacity,
            }),
        }
    }

    pub fn clock(&self) -> &SharedClock {
        &self.inner.clock
    }

    pub fn now(&self) -> Nanos {
        self.inner.clock.now()
    }

    pub fn started(&self) -> Nanos {
        self.inner.started
    }

    pub fn define_schema(&self, schema: Schema) {
        self.inner
            .schemas
            .write()
            .unwrap()
            .insert(schema.id(), schema);
    }

    pub fn schema(&self, id: &str) -> Option<Schema> {
        self.inner.schemas.read().unwrap().get(id).cloned()
    }

    /// Declares `iface` as provided by `provider`. Registering the same
    /// interface again (same schema) only records the additional provider.
    pub fn register(&self, iface: &InterfaceName, provider: &str) -> Result<(), BusError> {
        self.register_with_policy(iface, provider, GoalPolicy::default())
    }

    pub fn register_with_policy(
        &self,
        iface: &InterfaceName,
        provider: &str,
        policy: GoalPolicy,
    ) -> Result<(), BusError> {
        validate_path(&iface.path)?;
        if !self.inner.schemas.read().unwrap().contains_key(&iface.schema_id) {
            return Err(BusError::UnknownSchema(iface.schema_id.clone()));
        }
        let mut eps = self.inner.endpoints.write().unwrap();
        let ep = eps
            .entry(iface.key())
            .or_insert_with(|| {
                Arc::new(Endpoint {
                    iface: iface.clone(),
                    providers: Mutex::new(BTreeSet::new()),
                    stats: InterfaceStats::default(),
                    kind: match iface.kind {
                        InterfaceKind::Topic => EndpointKind::Topic(Mutex::new(TopicState {
                            seq: 0,
                            subscribers: Vec::new(),
                        })),
                        InterfaceKind::Service => EndpointKind::Service(RwLock::new(None)),
                        InterfaceKind::Action => {
                            EndpointKind::Action(Arc::new(ActionSlot::new(policy)))
                        }
                    },
                })
            })
            .clone();
        drop(eps);
        if ep.iface.schema_id != iface.schema_id {
            return Err(BusError::SchemaMismatch {
                path: iface.path.clone(),
                detail: format!(
                    "registered as {}, requested {}",
                    ep.iface.schema_id, iface.schema_id
                ),
            });
        }
        ep.providers.lock().unwrap().insert(provider.to_owned());
        Ok(())
    }

    fn endpoint(&self, iface: &InterfaceName) -> Result<Arc<Endpoint>, BusError> {
        let ep = self
            .inner
            .endpoints
            .read()
            .unwrap()
            .get(&iface.key())
            .cloned()
            .ok_or_else(|| BusError::UnknownInterface {
                path: iface.path.clone(),
                kind: iface.kind,
            })?;
        if ep.iface.schema_id != iface.schema_id {
            return Err(BusError::SchemaMismatch {
                path: iface.path.clone(),
                detail: format!(
                    "registered as {}, requested {}",
                    ep.iface.schema_id, iface.schema_id
                ),
            });
        }
        Ok(ep)
    }

    /// Looks up a registered interface by path and kind.
    pub fn lookup(&self, path: &str, kind: InterfaceKind) -> Option<InterfaceName> {
        self.inner
            .endpoints
            .read()
            .unwrap()
            .get(&(path.to_owned(), kind))
            .map(|e| e.iface.clone())
    }

    fn check_payload(&self, iface: &InterfaceName, payload: &Value) -> Result<(), BusError> {
        let schemas = self.inner.schemas.read().unwrap();
        let schema = schemas
            .get(&iface.schema_id)
            .ok_or_else(|| BusError::UnknownSchema(iface.schema_id.clone()))?;
        schema.check(payload).map_err(|detail| BusError::SchemaMismatch {
            path: iface.path.clone(),
            detail,
        })
    }

    /// Snapshot of everything registered on this bus.
    pub fn registry(&self) -> InterfaceRegistry {
        let mut reg = InterfaceRegistry::new();
        for ep in self.inner.endpoints.read().unwrap().values() {
            for p in ep.providers.lock().unwrap().iter() {
                reg.insert(ep.iface.clone(), p);
            }
        }
        reg
    }

    // --- topics ---

    pub fn publisher(&self, iface: &InterfaceName) -> Result<Publisher, BusError> {
        if iface.kind != InterfaceKind::Topic {
            return Err(BusError::UnknownInterface {
                path: iface.path.clone(),
                kind: iface.kind,
            });
        }
        let ep = self.endpoint(iface)?;
        Ok(Publisher {
            bus: self.clone(),
            ep,
        })
    }

    /// One-shot publish; equivalent to `publisher(iface)?.publish(payload)`.
    pub fn publish(&self, iface: &InterfaceName, payload: Value) -> Result<Envelope, BusError> {
        self.publisher(iface)?.publish(payload)
    }

    /// Republishes a recorded message keeping its original `seq` (restamping
    /// time from this bus's clock). Used by log replay.
    pub fn inject(&self, iface: &InterfaceName, seq: u64, payload: Value) -> Result<Envelope, BusError> {
        let publisher = self.publisher(iface)?;
        self.check_payload(iface, &payload)?;
        Ok(self.fan_out(&publisher.ep, payload, Some(seq)))
    }

    fn fan_out(&self, ep: &Endpoint, payload: Value, seq: Option<u64>) -> Envelope {
        let EndpointKind::Topic(topic) = &ep.kind else {
            unreachable!("publishers only exist for topics");
        };
        let mut st = topic.lock().unwrap();
        st.seq = match seq {
            Some(s) => s.max(st.seq),
            None => st.seq + 1,
        };
        let env = Envelope {
            interface: ep.iface.clone(),
            seq: seq.unwrap_or(st.seq),
            t_mono: self.inner.clock.now(),
            t_wall: self.inner.clock.wall_ns(),
            payload,
        };
        st.subscribers.retain(|w| w.strong_count() > 0);
        for sub in st.subscribers.iter().filter_map(Weak::upgrade) {
            if let Some(evicted) = sub.push(env.clone()) {
                self.count_drop(&evicted.interface, ep);
            }
        }
        drop(st);
        ep.stats.messages.fetch_add(1, Ordering::Relaxed);
        ep.stats
            .last_mono_plus_one
            .store(env.t_mono.0 + 1, Ordering::Relaxed);
        env
    }

    fn count_drop(&self, evicted: &InterfaceName, current: &Endpoint) {
        if evicted.key() == current.iface.key() {
            current.stats.drops.fetch_add(1, Ordering::Relaxed);
        } else if let Some(ep) = self.inner.endpoints.read().unwrap().get(&evicted.key()) {
            ep.stats.drops.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn subscribe(&self, iface: &InterfaceName) -> Result<Subscription, BusError> {
        self.subscribe_many(std::slice::from_ref(iface), self.inner.queue_capacity)
    }

    pub fn subscribe_with_capacity(
        &self,
        iface: &InterfaceName,
        capacity: usize,
    ) -> Result<Subscription, BusError> {
        self.subscribe_many(std::slice::from_ref(iface), capacity)
    }

    /// One queue fed by several topics; envelopes arrive in global publish
    /// order across all of them.
    pub fn subscribe_many(
        &self,
        ifaces: &[InterfaceName],
        capacity: usize,
    ) -> Result<Subscription, BusError> {
        let eps = ifaces
            .iter()
            .map(|i| {
                if i.kind != InterfaceKind::Topic {
                    return Err(BusError::UnknownInterface {
                        path: i.path.clone(),
                        kind: i.kind,
                    });
                }
                self.endpoint(i)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let queue = Arc::new(SubQueue::new(capacity));
        for ep in &eps {
            if let EndpointKind::Topic(t) = &ep.kind {
                t.lock().unwrap().subscribers.push(Arc::downgrade(&queue));
            }
        }
        Ok(Subscription { queue })
    }

    // --- services ---

    /// Registers `iface` and installs its request handler.
    pub fn serve<F>(&self, iface: &InterfaceName, provider: &str, handler: F) -> Result<(), BusError>
    where
        F: Fn(Value) -> Result<Value, String> + Send + Sync + 'static,
    {
        if iface.kind != InterfaceKind::Service {
            return Err(BusError::UnknownInterface {
                path: iface.path.clone(),
                kind: iface.kind,
            });
        }
        self.register(iface, provider)?;
        let ep = self.endpoint(iface)?;
        let EndpointKind::Service(slot) = &ep.kind else {
            unreachable!("kind checked above");
        };
        let mut slot = slot.write().unwrap();
        if slot.is_some() {
            return Err(BusError::AlreadyServed(iface.path.clone()));
        }
        *slot = Some(Arc::new(handler));
        Ok(())
    }

    /// Invokes a service. The caller waits at most `timeout`; a handler still
    /// running after that is left to finish on its own thread.
    pub fn call(&self, iface: &InterfaceName, request: Value, timeout: Duration) -> Result<Value, BusError> {
        let unknown = || BusError::UnknownInterface {
            path: iface.path.clone(),
            kind: iface.kind,
        };
        if iface.kind != InterfaceKind::Service {
            return Err(unknown());
        }
        let ep = self.endpoint(iface)?;
        let EndpointKind::Service(slot) = &ep.kind else {
            return Err(unknown());
        };
        let handler = slot.read().unwrap().clone().ok_or_else(unknown)?;
        self.check_payload(iface, &request)?;
        ep.stats.messages.fetch_add(1, Ordering::Relaxed);
        ep.stats
            .last_mono_plus_one
            .store(self.now().0 + 1, Ordering::Relaxed);
        let (tx, rx) = std::sync::mpsc::sync_channel(1);
        std::thread::Builder::new()
            .name(format!("svc{}", iface.path.replace('/', "_")))
            .spawn(move || {
                let _ = tx.send(handler(request));
            })
            .map_err(|e| BusError::HandlerError(e.to_string()))?;
        match rx.recv_timeout(timeout) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(BusError::HandlerError(e)),
            Err(std::sync::mpsc::RecvTimeoutError::Timeout) => {
                Err(BusError::Timeout(iface.path.clone()))
            }
            Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => {
                Err(BusError::HandlerError("handler panicked".into()))
            }
        }
    }

    // --- actions ---

    /// Registers `iface` and installs its goal handler. The handler runs on
    /// the sender's thread, inside `send_goal`; long work should be handed to
    /// another context.
    pub fn serve_action<F>(
        &self,
        iface: &InterfaceName,
        provider: &str,
        policy: GoalPolicy,
        handler: F,
    ) -> Result<(), BusError>
    where
        F: Fn(ServerGoal) + Send + Sync + 'static,
    {
        if iface.kind != InterfaceKind::Action {
            return Err(BusError::UnknownInterface {
                path: iface.path.clone(),
                kind: iface.kind,
            });
        }
        self.register_with_policy(iface, provider, policy)?;
        let ep = self.endpoint(iface)?;
        let EndpointKind::Action(slot) = &ep.kind else {
            unreachable!("kind checked above");
        };
        let mut h = slot.handler.lock().unwrap();
        if h.is_some() {
            return Err(BusError::AlreadyServed(iface.path.clone()));
        }
        *h = Some(Arc::new(handler));
        Ok(())
    }

    pub fn send_goal(&self, iface: &InterfaceName, goal: Value) -> Result<ActionHandle, BusError> {
        let unknown = || BusError::UnknownInterface {
            path: iface.path.clone(),
            kind: iface.kind,
        };
        if iface.kind != InterfaceKind::Action {
            return Err(unknown());
        }
        let ep = self.endpoint(iface)?;
        let EndpointKind::Action(slot) = &ep.kind else {
            return Err(unknown());
        };
        self.check_payload(iface, &goal)?;
        let id = GoalId(self.inner.next_goal.fetch_add(1, Ordering::Relaxed));
        let shared = GoalShared::new(
            id,
            ep.iface.clone(),
            goal,
            self.inner.clock.clone(),
            slot,
            self.inner.queue_capacity,
        );
        let handle = ActionHandle::new(shared.clone());
        slot.submit(shared)?;
        ep.stats.messages.fetch_add(1, Ordering::Relaxed);
        ep.stats
            .last_mono_plus_one
            .store(self.now().0 + 1, Ordering::Relaxed);
        Ok(handle)
    }

    // --- observation ---

    /// Reads counters only; never takes a topic lock.
    pub fn stats(&self) -> Vec<InterfaceStatsSnapshot> {
        self.inner
            .endpoints
            .read()
            .unwrap()
            .values()
            .map(|ep| {
                let last = ep.stats.last_mono_plus_one.load(Ordering::Relaxed);
                InterfaceStatsSnapshot {
                    interface: ep.iface.clone(),
                    messages: ep.stats.messages.load(Ordering::Relaxed),
                    last_message: (last > 0).then(|| Nanos(last - 1)),
                    drops: ep.stats.drops.load(Ordering::Relaxed),
                }
            })
            .collect()
    }

    pub fn heartbeat(&self, node: &str) {
        let now = self.now();
        self.inner
            .heartbeats
            .lock()
            .unwrap()
            .insert(node.to_owned(), now);
    }

    pub fn heartbeats(&self) -> BTreeMap<String, Nanos> {
        self.inner.heartbeats.lock().unwrap().clone()
    }
}

/// Publishing handle for one topic.
#[derive(Clone)]
pub struct Publisher {
    bus: Bus,
    ep: Arc<Endpoint>,
}

impl Publisher {
    pub fn interface(&self) -> &InterfaceName {
        &self.ep.iface
    }

    pub fn publish(&self, payload: Value) -> Result<Envelope, BusError> {
        self.bus.check_payload(&self.ep.iface, &payload)?;
        Ok(self.bus.fan_out(&self.ep, payload, None))
    }
}

impl std::fmt::Debug for Publisher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Publisher").field(&self.ep.iface.path).finish()
    }
}

/// Receiving end of one or more topics. Dropping it unsubscribes.
#[derive(Debug)]
pub struct Subscription {
    queue: Arc<SubQueue>,
}

impl Subscription {
    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.try_pop()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        self.queue.pop_timeout(timeout)
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.queue.drain()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Envelopes evicted from this subscription's queue so far.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped()
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity()
    }
}
