//! Simulated backend exposing the same interface set as the robot.

mod hwstub;
mod provider;
mod scenario;
mod servo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hwstub::{interfaces as hardware_interfaces, HardwareStub, HW_PROVIDER};
pub use provider::SimProvider;
pub use scenario::{Scenario, ScenarioEvent, TimedEvent};
pub use servo::{servo_step, servo_step_limited, ticks_to_converge, ServoSim};

use crate::bus::{Bus, BusError, InterfaceRegistry};
use crate::expression::ExpressionError;

pub const SIM_PROVIDER: &str = "sim";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Expression(#[from] ExpressionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimRates {
    pub joints_hz: f64,
    pub radar_hz: f64,
    pub feedback_hz: f64,
}

impl Default for SimRates {
    fn default() -> Self {
        Self {
            joints_hz: 50.0,
            radar_hz: 10.0,
            feedback_hz: 10.0,
        }
    }
}

impl SimRates {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, hz) in [
            ("joints_hz", self.joints_hz),
            ("radar_hz", self.radar_hz),
            ("feedback_hz", self.feedback_hz),
        ] {
            if !(hz.is_finite() && hz > 0.0 && hz <= 1000.0) {
                return Err(SimError::InvalidRates(format!("{name} = {hz}")));
            }
        }
        Ok(())
    }
}

/// Backend selection for a platform run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Sim,
    HardwareStub,
}

impl Backend {
    pub fn provider(self) -> &'static str {
        match self {
            Backend::Sim => SIM_PROVIDER,
            Backend::HardwareStub => HW_PROVIDER,
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(Backend::Sim),
            "hardware-stub" => Ok(Backend::HardwareStub),
            other => Err(format!("unknown mode {other:?} (expected sim or hardware-stub)")),
        }
    }
}

/// The registry a backend exposes, built on a scratch bus.
pub fn backend_registry(backend: Backend) -> Result<InterfaceRegistry, SimError> {
    use crate::clock::VirtualClock;
    use crate::expression::Library;
    use crate::model::RobotDescription;
    use std::sync::Arc;

    let bus = Bus::new(Arc::new(VirtualClock::new()));
    match backend {
        Backend::Sim => {
            let desc = Arc::new(RobotDescription::builtin());
            let lib = Arc::new(Library::builtin(&desc));
            SimProvider::new(&bus, desc, lib, &Scenario::default(), SimRates::default())?;
        }
        Backend::HardwareStub => {
            HardwareStub::register(&bus)?;
        }
    }
    Ok(bus.registry().filter_provider(backend.provider()))
}
