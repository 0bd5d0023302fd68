//! Interaction layer: story delivery, the coaching session model, response
//! generation and the session lock that keeps interactions exclusive.

mod coach;
mod generator;
mod lock;
mod session;
mod story;
mod story_node;

use thiserror::Error;

pub use coach::{deliver, CoachNode, CoachOptions, Delivery, ScriptedUser, COACH_OWNER};
pub use generator::{
    estimate_duration, HttpGenerator, MockGenerator, ResponseGenerator, WithFallback, SECONDS_PER_CHAR,
};
pub use lock::{acquire, release, serve_session_lock, LOCK_PROVIDER};
pub use session::{
    ingest_turn, record_act, ConversationalAct, ExitRule, Phase, PhaseCounters, PhasePolicy, SessionState,
    Speaker, Turn, DAYS,
};
pub use story::{Rejected, StoryChunk, StoryCommand, StoryInput, StoryMachine, StoryPhase, StoryScript};
pub use story_node::{CueRecord, StoryNode, STORY_OWNER};

use crate::bus::BusError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InteractError {
    #[error("invalid story script: {0}")]
    InvalidScript(String),
    #[error("speak failed: {0}")]
    SpeakFailed(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("empty user turn")]
    EmptyTurn,
    #[error("turn timestamp precedes session history")]
    OutOfOrder,
    #[error("day {0} is outside 1..=5")]
    InvalidDay(u8),
    #[error("invalid conversational act: {0}")]
    InvalidAct(String),
    #[error("response generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("robot is in use by {0}")]
    SessionBusy(String),
    #[error("session can only resume at a phase boundary")]
    NotAtBoundary,
    #[error(transparent)]
    Bus(#[from] BusError),
}
