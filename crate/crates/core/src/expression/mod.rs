//! Timeline-based expressive behavior: keyframe tracks for joints, face and
//! haptics, priority blending with ramped preemption, slew-limited output, and
//! cue scheduling relative to speech.

mod active;
mod cues;
mod engine;
mod library;
mod timeline;

use thiserror::Error;

pub use active::{ActiveSet, EntryEvent, EntryId, EntryOutcome};
pub use cues::{Cue, CueDispatch, CueGroupId, CueSchedule, CueScheduler, CUE_GRACE};
pub use engine::{ExpressionEngine, DEFAULT_RAMP};
pub use library::{Library, Manifest};
pub use timeline::{
    breathing_pattern, Channel, Easing, FaceKeyframe, Frame, HapticKeyframe, JointKeyframe, Timeline,
    TimelineSpec, Track, TrackKind,
};

use crate::model::JointId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpressionError {
    #[error("timeline {0} has no keyframes")]
    EmptyTimeline(String),
    #[error("{track:?} keyframe {index}: time {t} must be finite and >= 0")]
    InvalidTime { track: TrackKind, index: usize, t: f64 },
    #[error("{track:?} keyframe {index} is not strictly after the previous one")]
    NonMonotonic { track: TrackKind, index: usize },
    #[error("duplicate {0:?} track")]
    DuplicateTrack(TrackKind),
    #[error("target {value} for {joint} outside [{min}, {max}]")]
    TargetOutOfLimits { joint: JointId, value: f64, min: f64, max: f64 },
    #[error("unknown face expression {0:?}")]
    UnknownExpression(String),
    #[error("haptic amplitude {0} outside [0, 1]")]
    AmplitudeOutOfRange(f64),
    #[error("duration {duration} is shorter than the last keyframe at {last_keyframe}")]
    DurationTooShort { duration: f64, last_keyframe: f64 },
    #[error("joint and face tracks need a robot description")]
    NeedsDescription,
    #[error("invalid duration: {0}")]
    InvalidDuration(String),
    #[error("cue {index} offset {offset} outside [0, {limit}]")]
    CueOutOfRange { index: usize, offset: f64, limit: f64 },
    #[error("timeline parse error: {0}")]
    Parse(String),
    #[error("library: {0}")]
    Library(String),
}
