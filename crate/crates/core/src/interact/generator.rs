//! Response generation behind one interface: a deterministic template mock
//! and an HTTP client for an external model service.

use std::time::Duration;

use serde::Serialize;

use super::session::{ConversationalAct, Phase, SessionState};
use super::InteractError;
use crate::expression::Library;

pub trait ResponseGenerator: Send {
    fn name(&self) -> &str;
    fn generate(&self, state: &SessionState) -> Result<ConversationalAct, InteractError>;
}

/// Seconds per character of utterance, with a one-second floor.
pub const SECONDS_PER_CHAR: f64 = 0.06;

pub fn estimate_duration(utterance: &str) -> f64 {
    (SECONDS_PER_CHAR * utterance.chars().count() as f64).max(1.0)
}

const DAY_TOPICS: [&str; 5] = [
    "noticing your breath",
    "naming a feeling",
    "a kind thought about yourself",
    "one small helpful step",
    "looking back on the week",
];

struct Template {
    text: &'static str,
    face: &'static str,
    gesture: &'static str,
}

const fn t(text: &'static str, face: &'static str, gesture: &'static str) -> Template {
    Template { text, face, gesture }
}

// `{topic}` and `{last}` are substituted; `{last}` is the latest user turn.
const GREETING: &[Template] = &[
    t("Hello! It is good to see you. Today is day {day}, and we will practice {topic}.", "joy", "wave"),
];
const PRACTICE: &[Template] = &[
    t("Thank you for sharing \"{last}\". Let us try {topic} together for a moment.", "calm", "nod"),
    t("I hear you: \"{last}\". Take a slow breath with me while we focus on {topic}.", "listening", "listen"),
    t("That makes sense. What do you notice when you think about {topic}?", "thinking", "head_tilt"),
];
const FOLLOW_UP: &[Template] = &[
    t("You said \"{last}\". How did {topic} feel this time?", "wonder", "head_tilt"),
    t("That is a real step. What would make {topic} easier tomorrow?", "thinking", "beat"),
];
const CLOSING: &[Template] = &[
    t("Well done today. You practiced {topic}. I look forward to seeing you again.", "joy", "celebrate"),
];

fn templates(p: Phase) -> &'static [Template] {
    match p {
        Phase::Greeting => GREETING,
        Phase::Practice => PRACTICE,
        Phase::FollowUp => FOLLOW_UP,
        Phase::Closing => CLOSING,
    }
}

/// Phase-keyed templates. A pure function of the session state.
#[derive(Debug, Clone)]
pub struct MockGenerator;

impl MockGenerator {
    /// Fails if any template names a face or gesture the library lacks.
    pub fn new(library: &Library) -> Result<Self, InteractError> {
        for p in Phase::ALL {
            for tpl in templates(p) {
                if !library.has_face(tpl.face) || !library.contains(tpl.gesture) {
                    return Err(InteractError::InvalidAct(format!(
                        "mock template for {} uses {}/{} missing from the library",
                        p.as_str(),
                        tpl.face,
                        tpl.gesture
                    )));
                }
            }
        }
        Ok(MockGenerator)
    }

    pub fn act_for(&self, state: &SessionState) -> ConversationalAct {
        let options = templates(state.phase);
        let tpl = &options[(state.history.len() + usize::from(state.day)) % options.len()];
        let day = usize::from(state.day.clamp(1, 5));
        let last: String = state
            .last_user_text()
            .unwrap_or("")
            .chars()
            .take(60)
            .collect();
        let utterance = tpl
            .text
            .replace("{day}", &day.to_string())
            .replace("{topic}", DAY_TOPICS[day - 1])
            .replace("{last}", &last);
        ConversationalAct {
            estimated_duration: estimate_duration(&utterance),
            utterance,
            face: tpl.face.to_owned(),
            gesture: tpl.gesture.to_owned(),
        }
    }
}

impl ResponseGenerator for MockGenerator {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(&self, state: &SessionState) -> Result<ConversationalAct, InteractError> {
        Ok(self.act_for(state))
    }
}

/// Request body: the session view a model service needs.
#[derive(Serialize)]
struct GenerateRequest<'a> {
    session_id: &'a str,
    day: u8,
    phase: Phase,
    history: &'a [super::session::Turn],
    progress: &'a [bool],
}

/// POSTs the session view as JSON and expects a `ConversationalAct` back.
pub struct HttpGenerator {
    url: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpGenerator").field("url", &self.url).finish()
    }
}

impl HttpGenerator {
    pub fn new(url: &str, timeout: Duration) -> Result<Self, InteractError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| InteractError::GeneratorUnavailable(e.to_string()))?;
        Ok(Self {
            url: url.to_owned(),
            client,
        })
    }
}

impl ResponseGenerator for HttpGenerator {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(&self, state: &SessionState) -> Result<ConversationalAct, InteractError> {
        let unavailable = |e: reqwest::Error| InteractError::GeneratorUnavailable(e.to_string());
        let body = GenerateRequest {
            session_id: &state.session_id,
            day: state.day,
            phase: state.phase,
            history: &state.history,
            progress: &state.progress,
        };
        self.client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(unavailable)?
            .json::<ConversationalAct>()
            .map_err(unavailable)
    }
}

/// Uses `primary` and falls back to the mock when it is unavailable or
/// returns an act the library cannot play.
pub struct WithFallback<G> {
    pub primary: G,
    pub fallback: MockGenerator,
    library: std::sync::Arc<Library>,
}

impl<G: ResponseGenerator> WithFallback<G> {
    pub fn new(primary: G, library: std::sync::Arc<Library>) -> Result<Self, InteractError> {
        Ok(Self {
            primary,
            fallback: MockGenerator::new(&library)?,
            library,
        })
    }
}

impl<G: ResponseGenerator> ResponseGenerator for WithFallback<G> {
    fn name(&self) -> &str {
        self.primary.name()
    }

    fn generate(&self, state: &SessionState) -> Result<ConversationalAct, InteractError> {
        match self
            .primary
            .generate(state)
            .and_then(|a| a.validate(&self.library).map(|_| a))
        {
            Ok(a) => Ok(a),
            Err(e) => {
                log::warn!("{} generator failed ({e}); using mock", self.primary.name());
                self.fallback.generate(state)
            }
        }
    }
}
