//! Core of the companion-robot platform: message bus, robot model, expression
//! engine, simulator, perception, interaction logic and session logging.
//!
//! The CLI and bench crates use only what is re-exported here and the public
//! modules.

pub mod bus;
pub mod clock;
pub mod config;
pub mod expression;
pub mod ifaces;
pub mod interact;
pub mod logkit;
pub mod model;
pub mod perception;
pub mod platform;
pub mod runtime;
pub mod sim;
pub mod twin;

pub use bus::{
    ActionHandle, Bus, BusError, Envelope, GoalPolicy, GoalStatus, InterfaceKind, InterfaceName, InterfaceRegistry,
};
pub use clock::{Clock, ClockMode, Nanos, RealClock, SharedClock, VirtualClock};
pub use config::{ConfigError, LoadedConfig, PlatformConfig};
pub use expression::{Library, Timeline};
pub use logkit::{HealthReport, LogError, SessionLog};
pub use model::{JointId, JointLimits, RobotDescription};
pub use platform::{Platform, PlatformError, RunOptions};
pub use runtime::{Executor, Node, Step};
pub use sim::{Backend, Scenario};
pub use twin::{TwinHub, TwinMessage, TwinMode};
