//! Assembles a runnable platform from a config: clock, bus, backend,
//! perception, session lock, recorder and twin hub.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::bus::{Bus, BusError, InterfaceKind};
use crate::clock::{Nanos, RealClock, SharedClock, VirtualClock};
use crate::config::{ConfigError, LoadedConfig};
use crate::expression::{ExpressionError, Library};
use crate::ifaces;
use crate::interact::{serve_session_lock, InteractError, COACH_OWNER, STORY_OWNER};
use crate::logkit::{log_root, LogError, Recorder, RecorderOptions, RecorderSummary, SessionIds};
use crate::model::{ModelError, RobotDescription};
use crate::perception::PerceptionNode;
use crate::runtime::{Executor, Node, RunOutcome, Shared};
use crate::sim::{Backend, HardwareStub, Scenario, SimError, SimProvider};
use crate::twin::TwinHub;

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expression(#[from] ExpressionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Interact(#[from] InteractError),
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub virtual_time: bool,
    pub scenario: Scenario,
    /// Capture a session log under the configured root.
    pub record: bool,
    /// Overrides the seeded session id.
    pub session_id: Option<String>,
}

/// Robot description and gesture library named by the config, or the
/// built-in ones.
pub fn load_assets(config: &LoadedConfig) -> Result<(Arc<RobotDescription>, Arc<Library>), PlatformError> {
    let c = &config.config;
    let desc = match &c.robot_description {
        Some(p) => RobotDescription::load(p)?,
        None => RobotDescription::builtin(),
    };
    let lib = match &c.library {
        Some(dir) => Library::load(dir, &desc)?,
        None => Library::builtin(&desc),
    };
    Ok((Arc::new(desc), Arc::new(lib)))
}

pub struct Platform {
    pub config: LoadedConfig,
    pub bus: Bus,
    pub executor: Executor,
    pub virtual_clock: Option<Arc<VirtualClock>>,
    pub description: Arc<RobotDescription>,
    pub library: Arc<Library>,
    pub twin: Arc<TwinHub>,
    pub log_root: PathBuf,
    pub session_id: String,
    recorder: Option<Arc<Mutex<Recorder>>>,
}

impl Platform {
    pub fn build(config: LoadedConfig, opts: RunOptions) -> Result<Self, PlatformError> {
        let (description, library) = load_assets(&config)?;
        let c = &config.config;
        let virtual_clock = opts.virtual_time.then(|| Arc::new(VirtualClock::new()));
        let clock: SharedClock = match &virtual_clock {
            Some(vc) => vc.clone(),
            None => RealClock::shared(),
        };
        let bus = Bus::new(clock);
        let mut executor = Executor::new(bus.clone(), virtual_clock.clone());
        match c.mode {
            Backend::Sim => executor.add(SimProvider::new(
                &bus,
                description.clone(),
                library.clone(),
                &opts.scenario,
                c.rates,
            )?),
            Backend::HardwareStub => {
                HardwareStub::register(&bus)?;
            }
        }
        executor.add(PerceptionNode::new(&bus, c.detectors)?);
        serve_session_lock(&bus)?;
        // Registered up front so the recorder captures them from the start.
        bus.register(&ifaces::story_events(), STORY_OWNER)?;
        bus.register(&ifaces::coach_events(), COACH_OWNER)?;

        let root = log_root(&c.log_root);
        let mut ids = SessionIds::seeded(c.seed);
        let session_id = match opts.session_id {
            Some(id) => id,
            // Next id in the seeded sequence that is still free under `root`.
            None => loop {
                let id = ids.next_id();
                if !root.join(&id).exists() {
                    break id;
                }
            },
        };

        let recorder = if opts.record {
            let streams = bus
                .registry()
                .interfaces()
                .into_iter()
                .filter(|i| i.kind == InterfaceKind::Topic)
                .collect();
            let mut ro = RecorderOptions::new(&session_id, streams);
            ro.metadata = BTreeMap::from([
                ("deployment_id".to_owned(), c.deployment_id.clone()),
                ("robot_id".to_owned(), c.robot_id.clone()),
                ("config_hash".to_owned(), config.hash.clone()),
                ("backend".to_owned(), c.mode.provider().to_owned()),
                ("clock".to_owned(), if opts.virtual_time { "virtual" } else { "real" }.to_owned()),
                ("seed".to_owned(), c.seed.to_string()),
            ]);
            let (node, handle) = Shared::new(Recorder::start(&bus, &root, ro)?);
            executor.add(node);
            Some(handle)
        } else {
            None
        };
        let twin = Arc::new(TwinHub::new(description.clone(), c.twin_mode, c.twin_rate_hz));
        Ok(Self {
            config,
            bus,
            executor,
            virtual_clock,
            description,
            library,
            twin,
            log_root: root,
            session_id,
            recorder,
        })
    }

    pub fn add<N: Node + 'static>(&mut self, node: N) {
        self.executor.add(node);
    }

    pub fn run_until(&mut self, end: Option<Nanos>) -> RunOutcome {
        self.executor.run_until(end)
    }

    /// Session directory, when recording.
    pub fn session_dir(&self) -> Option<PathBuf> {
        self.recorder.as_ref().map(|r| r.lock().unwrap().dir().to_owned())
    }

    /// Flushes the recorder and stamps the session end. Safe to call twice.
    pub fn finish(&mut self) -> Result<Option<RecorderSummary>, PlatformError> {
        match &self.recorder {
            Some(r) => Ok(Some(r.lock().unwrap().finish()?)),
            None => Ok(None),
        }
    }
}
