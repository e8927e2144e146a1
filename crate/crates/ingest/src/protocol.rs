//! Connection preamble: one ASCII line `BCG1 <sensor_id>\n`, then back-to-back
//! fixed-size packets with no further framing.

use thiserror::Error;

pub const HELLO_PREFIX: &str = "BCG1 ";
/// Longest accepted hello line, newline included.
pub const MAX_HELLO_LEN: usize = 128;
pub const MAX_SENSOR_ID_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HelloError {
    #[error("hello line is longer than {MAX_HELLO_LEN} bytes")]
    TooLong,
    #[error("connection closed before the hello line was complete")]
    Incomplete,
    #[error("hello line does not start with {HELLO_PREFIX:?}")]
    BadPrefix,
    #[error("sensor id {0:?} must be 1-64 characters of [A-Za-z0-9._-] and not start with '.'")]
    BadSensorId(String),
}

pub fn hello_line(sensor_id: &str) -> String {
    format!("{HELLO_PREFIX}{sensor_id}\n")
}

/// The sensor id doubles as a file name prefix, so it is kept to a safe set.
pub fn validate_sensor_id(id: &str) -> Result<(), HelloError> {
    let ok = !id.is_empty()
        && id.len() <= MAX_SENSOR_ID_LEN
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(HelloError::BadSensorId(id.to_string()))
    }
}

/// Parses a complete hello line (with or without the trailing newline; a
/// trailing `\r` is tolerated).
pub fn parse_hello(line: &[u8]) -> Result<String, HelloError> {
    if line.len() > MAX_HELLO_LEN {
        return Err(HelloError::TooLong);
    }
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let rest = line.strip_prefix(HELLO_PREFIX.as_bytes()).ok_or(HelloError::BadPrefix)?;
    let id = std::str::from_utf8(rest).map_err(|_| HelloError::BadSensorId(String::from_utf8_lossy(rest).into()))?;
    validate_sensor_id(id)?;
    Ok(id.to_string())
}
