//! Process exit codes and the error that carries one.

use std::fmt;

use m_core::config::ConfigError;
use m_core::interact::InteractError;
use m_core::logkit::LogError;
use m_core::platform::PlatformError;

pub const OK: i32 = 0;
/// A comparison found a difference; also any failure without its own code.
pub const DIFFERENT: i32 = 1;
/// Bad usage or a missing input file.
pub const USAGE: i32 = 2;
pub const ABORTED: i32 = 3;
pub const INVALID: i32 = 4;
pub const CORRUPT: i32 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(code: i32, message: impl fmt::Display) -> anyhow::Error {
    Failure {
        code,
        message: message.to_string(),
    }
    .into()
}

fn config_code(e: &ConfigError) -> i32 {
    match e {
        ConfigError::Missing(_) | ConfigError::Unreadable { .. } => USAGE,
        ConfigError::Invalid { .. } => INVALID,
    }
}

fn log_code(e: &LogError) -> i32 {
    match e {
        LogError::CorruptLog { .. } => CORRUPT,
        LogError::NotFound(_) => USAGE,
        LogError::InvalidSpeed(_) => INVALID,
        _ => DIFFERENT,
    }
}

fn interact_code(e: &InteractError) -> i32 {
    match e {
        InteractError::InvalidScript(_) | InteractError::InvalidDay(_) | InteractError::InvalidAct(_) => INVALID,
        _ => DIFFERENT,
    }
}

/// Exit code for an error raised anywhere in a command.
pub fn code_of(e: &anyhow::Error) -> i32 {
    if let Some(f) = e.downcast_ref::<Failure>() {
        return f.code;
    }
    if let Some(c) = e.downcast_ref::<ConfigError>() {
        return config_code(c);
    }
    if let Some(l) = e.downcast_ref::<LogError>() {
        return log_code(l);
    }
    if let Some(i) = e.downcast_ref::<InteractError>() {
        return interact_code(i);
    }
    match e.downcast_ref::<PlatformError>() {
        Some(PlatformError::Config(c)) => config_code(c),
        Some(PlatformError::Log(l)) => log_code(l),
        Some(PlatformError::Interact(i)) => interact_code(i),
        Some(PlatformError::Model(_) | PlatformError::Expression(_) | PlatformError::Sim(_)) => INVALID,
        _ => DIFFERENT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn codes_follow_the_error_kind() {
        assert_eq!(code_of(&ConfigError::Missing(PathBuf::from("x")).into()), USAGE);
        assert_eq!(code_of(&InteractError::InvalidDay(6).into()), INVALID);
        let corrupt = LogError::CorruptLog {
            file: "f".into(),
            line: 2,
            last_valid: None,
            detail: "d".into(),
        };
        assert_eq!(code_of(&PlatformError::Log(corrupt).into()), CORRUPT);
        assert_eq!(code_of(&fail(ABORTED, "x")), ABORTED);
        assert_eq!(code_of(&anyhow::anyhow!("other")), DIFFERENT);
    }
}
