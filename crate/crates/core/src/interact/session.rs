//! Coaching session state and the phase policy.

use serde::{Deserialize, Serialize};

use super::InteractError;
use crate::clock::Nanos;
use crate::expression::Library;

pub const DAYS: u8 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Greeting,
    Practice,
    FollowUp,
    Closing,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Greeting, Phase::Practice, Phase::FollowUp, Phase::Closing];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Greeting => "greeting",
            Phase::Practice => "practice",
            Phase::FollowUp => "follow_up",
            Phase::Closing => "closing",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Robot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub t: Nanos,
    /// Phase the turn belongs to.
    pub phase: Phase,
}

/// Condition that ends a phase, evaluated when an exchange completes (the
/// robot has answered), so a reply always belongs to its turn's phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "after", content = "count", rename_all = "snake_case")]
pub enum ExitRule {
    RobotActs(u32),
    UserTurns(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePolicy {
    /// Exit rule per phase, in phase order.
    pub rules: Vec<(Phase, ExitRule)>,
}

impl Default for PhasePolicy {
    fn default() -> Self {
        Self {
            rules: vec![
                (Phase::Greeting, ExitRule::RobotActs(1)),
                (Phase::Practice, ExitRule::UserTurns(2)),
                (Phase::FollowUp, ExitRule::UserTurns(2)),
                (Phase::Closing, ExitRule::RobotActs(1)),
            ],
        }
    }
}

impl PhasePolicy {
    fn rule(&self, p: Phase) -> ExitRule {
        self.rules
            .iter()
            .find(|(q, _)| *q == p)
            .map(|(_, r)| *r)
            .unwrap_or(ExitRule::RobotActs(1))
    }

    fn after(&self, p: Phase) -> Option<Phase> {
        let i = self.rules.iter().position(|(q, _)| *q == p)?;
        self.rules.get(i + 1).map(|(q, _)| *q)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounters {
    pub user: u32,
    pub robot: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub day: u8,
    pub phase: Phase,
    pub closed: bool,
    pub history: Vec<Turn>,
    /// Completion flag per day, index 0 is day 1.
    pub progress: [bool; DAYS as usize],
    pub counters: PhaseCounters,
}

impl SessionState {
    pub fn open(session_id: &str, day: u8, progress: [bool; DAYS as usize]) -> Result<Self, InteractError> {
        if !(1..=DAYS).contains(&day) {
            return Err(InteractError::InvalidDay(day));
        }
        Ok(Self {
            session_id: session_id.to_owned(),
            day,
            phase: Phase::Greeting,
            closed: false,
            history: Vec::new(),
            progress,
            counters: PhaseCounters::default(),
        })
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::User)
            .map(|t| t.text.as_str())
    }

    /// True right after a phase change, the only points a session may be
    /// resumed from.
    pub fn at_phase_boundary(&self) -> bool {
        self.counters == PhaseCounters::default()
    }

    /// Checks that a saved state may be picked up again.
    pub fn resume(self) -> Result<Self, InteractError> {
        if self.closed {
            return Err(InteractError::SessionClosed);
        }
        if !self.at_phase_boundary() {
            return Err(InteractError::NotAtBoundary);
        }
        Ok(self)
    }

    fn append(&mut self, speaker: Speaker, text: &str, t: Nanos) -> Result<(), InteractError> {
        if self.closed {
            return Err(InteractError::SessionClosed);
        }
        if self.history.last().is_some_and(|last| last.t > t) {
            return Err(InteractError::OutOfOrder);
        }
        self.history.push(Turn {
            speaker,
            text: text.to_owned(),
            t,
            phase: self.phase,
        });
        Ok(())
    }

    /// Phase change on exchange completion, if the policy says so.
    fn advance(&mut self, policy: &PhasePolicy) -> Option<(Phase, Option<Phase>)> {
        let done = match policy.rule(self.phase) {
            ExitRule::RobotActs(n) => self.counters.robot >= n,
            ExitRule::UserTurns(n) => self.counters.user >= n,
        };
        if !done {
            return None;
        }
        let from = self.phase;
        self.counters = PhaseCounters::default();
        match policy.after(from) {
            Some(next) => {
                self.phase = next;
                Some((from, Some(next)))
            }
            None => {
                self.closed = true;
                self.progress[usize::from(self.day - 1)] = true;
                Some((from, None))
            }
        }
    }
}

/// Appends a user turn.
pub fn ingest_turn(state: &SessionState, text: &str, t: Nanos) -> Result<SessionState, InteractError> {
    let text = crate::perception::normalize_turn(text).ok_or(InteractError::EmptyTurn)?;
    let mut s = state.clone();
    s.append(Speaker::User, &text, t)?;
    s.counters.user += 1;
    Ok(s)
}

/// Appends the robot's act and applies the phase policy. Returns the phase
/// change, where `None` as target means the session closed.
pub fn record_act(
    state: &SessionState,
    act: &ConversationalAct,
    t: Nanos,
    policy: &PhasePolicy,
) -> Result<(SessionState, Option<(Phase, Option<Phase>)>), InteractError> {
    let mut s = state.clone();
    s.append(Speaker::Robot, &act.utterance, t)?;
    s.counters.robot += 1;
    let change = s.advance(policy);
    Ok((s, change))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationalAct {
    pub utterance: String,
    /// Seconds.
    pub estimated_duration: f64,
    pub face: String,
    pub gesture: String,
}

impl ConversationalAct {
    pub fn validate(&self, library: &Library) -> Result<(), InteractError> {
        let bad = |m: String| Err(InteractError::InvalidAct(m));
        if self.utterance.trim().is_empty() {
            return bad("empty utterance".into());
        }
        if !(self.estimated_duration.is_finite() && self.estimated_duration > 0.0) {
            return bad(format!("duration {} must be > 0", self.estimated_duration));
        }
        if !library.has_face(&self.face) {
            return bad(format!("unknown face {:?}", self.face));
        }
        if !library.contains(&self.gesture) {
            return bad(format!("unknown gesture {:?}", self.gesture));
        }
        Ok(())
    }
}
