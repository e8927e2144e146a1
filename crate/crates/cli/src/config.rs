//! Optional TOML config. Every section and field may be omitted; flags win
//! over the file, the file wins over built-in defaults.
//!
//! ```toml
//! [analysis]          # any AnalysisConfig field
//! peak_percentile = 5.0
//!
//! [serve]
//! bind = "0.0.0.0:7878"
//! storage = "/var/lib/bcg"
//! calibration = "calibration.json"
//! hello_timeout_s = 10
//!
//! [emulate]
//! target = "10.0.0.2:7878"
//!
//! [synth]             # any SynthParams field
//! heart_rate_bpm = 62
//! ```

use std::path::{Path, PathBuf};

use bcg_core::synth::SynthParams;
use bcg_core::AnalysisConfigF64;
use serde::Deserialize;

use crate::args::SynthFlags;
use crate::CliError;

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";
pub const DEFAULT_STORAGE: &str = "sessions";
pub const DEFAULT_HELLO_TIMEOUT_S: f64 = 10.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub analysis: AnalysisConfigF64,
    #[serde(default)]
    pub serve: ServeSection,
    #[serde(default)]
    pub emulate: EmulateSection,
    #[serde(default)]
    pub synth: SynthParams,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub bind: Option<String>,
    pub storage: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub hello_timeout_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulateSection {
    pub target: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        cfg.analysis.validate().map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }
}

/// Synth parameters: file section first, then flags on top.
pub fn synth_params(base: &SynthParams, flags: &SynthFlags) -> SynthParams {
    let mut p = base.clone();
    if let Some(v) = flags.hr {
        p.heart_rate_bpm = v;
    }
    if let Some(v) = flags.rr {
        p.resp_rate_bpm = v;
    }
    if let Some(v) = flags.seed {
        p.seed = v;
    }
    if let Some(v) = flags.noise_density {
        p.noise_density_ug_per_rthz = Some(v);
    }
    if let Some(v) = flags.jitter_pct {
        p.hr_jitter_pct = v;
        p.rr_jitter_pct = v;
    }
    if flags.vacant {
        p.occupied_intervals_s = Some(Vec::new());
    } else if !flags.occupied.is_empty() {
        p.occupied_intervals_s = Some(flags.occupied.clone());
    }
    if let Some(v) = flags.start_ms {
        p.start_ms = v;
    }
    p
}
