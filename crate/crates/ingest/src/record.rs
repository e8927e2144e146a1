use std::io::{self, BufRead};
use std::path::Path;

use bcg_core::SecondRecord;
use serde::{Deserialize, Serialize};

/// One persisted line of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    /// Server arrival time, ms since the Unix epoch.
    pub t_ms: i64,
    pub sensor_id: String,
    #[serde(flatten)]
    pub second: SecondRecord<f64>,
}

/// `<sensor_id>-<start_ts>.jsonl`
pub fn session_file_name(sensor_id: &str, start_ts_ms: i64) -> String {
    format!("{sensor_id}-{start_ts_ms}.jsonl")
}

/// Reads a session file back. Blank lines are skipped.
pub fn read_session_file(path: &Path) -> io::Result<Vec<SessionRecord>> {
    let file = io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
