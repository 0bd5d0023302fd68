//! Names of the platform's interfaces.

use crate::bus::schema::ids;
use crate::bus::InterfaceName;

fn topic(path: &str, schema: &str) -> InterfaceName {
    InterfaceName::topic(path, schema).expect("static interface name")
}

fn service(path: &str, schema: &str) -> InterfaceName {
    InterfaceName::service(path, schema).expect("static interface name")
}

fn action(path: &str, schema: &str) -> InterfaceName {
    InterfaceName::action(path, schema).expect("static interface name")
}

pub fn joint_states() -> InterfaceName {
    topic("/m/joint_states", ids::JOINT_STATE)
}

pub fn face_state() -> InterfaceName {
    topic("/m/face_state", ids::FACE_STATE)
}

pub fn radar_energy() -> InterfaceName {
    topic("/m/radar_energy", ids::RADAR_ENERGY)
}

pub fn touch_events() -> InterfaceName {
    topic("/m/touch_events", ids::TOUCH_CONTACT)
}

pub fn haptic_state() -> InterfaceName {
    topic("/m/haptic_state", ids::HAPTIC_STATE)
}

pub fn set_joint_targets() -> InterfaceName {
    service("/m/set_joint_targets", ids::SET_JOINT_TARGETS)
}

pub fn play_timeline() -> InterfaceName {
    action("/m/play_timeline", ids::PLAY_TIMELINE)
}

pub fn speak() -> InterfaceName {
    action("/m/speak", ids::SPEAK)
}

pub fn user_turns() -> InterfaceName {
    topic("/m/user_turns", ids::USER_TURN)
}

pub fn presence() -> InterfaceName {
    topic("/m/presence", ids::PRESENCE_EVENT)
}

pub fn touch_gestures() -> InterfaceName {
    topic("/m/touch_gestures", ids::TOUCH_GESTURE)
}

pub fn system_events() -> InterfaceName {
    topic("/m/system_events", ids::SYSTEM_EVENT)
}

pub fn story_play() -> InterfaceName {
    action("/m/story/play", ids::STORY_PLAY)
}

pub fn story_control() -> InterfaceName {
    service("/m/story/control", ids::STORY_CONTROL)
}

pub fn story_events() -> InterfaceName {
    topic("/m/story/events", ids::STORY_EVENT)
}

pub fn coach_events() -> InterfaceName {
    topic("/m/coach/events", ids::COACH_EVENT)
}

pub fn session_lock() -> InterfaceName {
    service("/m/session_lock", ids::SESSION_LOCK)
}
