use std::path::PathBuf;

use bcg_core::SensorChannel;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Ballistocardiography toolkit: offline analysis, calibration, ingestion
/// server and sensor emulator.
#[derive(Parser, Debug)]
#[command(name = "bcg", version, about)]
pub struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug); RUST_LOG takes precedence
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-second occupancy and vitals for a recording
    Analyze(AnalyzeArgs),
    /// Export a CWT scalogram as CSV
    Scalogram(ScalogramArgs),
    /// Derive a sensor calibration from empty/occupied recordings
    Calibrate(CalibrateArgs),
    /// Run the ingestion server
    Serve(ServeArgs),
    /// Stream synthetic packets to a server
    Emulate(EmulateArgs),
    /// Write a synthetic recording
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Packet dump (.bcg) or CSV `t_ms,sensor,axis,mg`
    pub input: PathBuf,
    /// Calibration file (JSON objects, one per sensor)
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Which calibration entry to use; optional if the file has only one
    #[arg(long)]
    pub sensor_id: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    /// Output file (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Also write occupancy transitions as JSONL to this file
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Emit every second, not only occupied ones
    #[arg(long)]
    pub all_seconds: bool,
}

#[derive(Args, Debug)]
pub struct ScalogramArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "LIS3DHH.X")]
    pub channel: SensorChannel,
    /// Explicit analysis frequencies in Hz (increasing)
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["fmin", "fmax", "nfreqs"])]
    pub freqs: Option<Vec<f64>>,
    /// Lowest frequency of a log-spaced grid
    #[arg(long, default_value_t = 0.5)]
    pub fmin: f64,
    #[arg(long, default_value_t = 25.0)]
    pub fmax: f64,
    #[arg(long, default_value_t = 40)]
    pub nfreqs: usize,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Recording of the unoccupied furniture
    #[arg(long)]
    pub empty: PathBuf,
    /// Recording with the person in place
    #[arg(long)]
    pub occupied: PathBuf,
    /// Separate measurement for the peak thresholds (default: empty followed
    /// by occupied)
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub sensor_id: String,
    /// Channel the vitals are estimated from
    #[arg(long, default_value = "LIS3DHH.X")]
    pub vitals_channel: SensorChannel,
    /// Output file (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Append to the output file instead of overwriting it
    #[arg(long, requires = "out")]
    pub append: bool,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Listen address [default: 127.0.0.1:7878]
    #[arg(long)]
    pub bind: Option<String>,
    /// Session file directory [default: ./sessions]
    #[arg(long)]
    pub storage: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Seconds a new connection has to send its hello line [default: 10]
    #[arg(long)]
    pub hello_timeout_s: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct SynthFlags {
    #[arg(long)]
    pub hr: Option<f64>,
    #[arg(long)]
    pub rr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the datasheet noise density of every sensor (µg/√Hz)
    #[arg(long)]
    pub noise_density: Option<f64>,
    /// Jitter of beat and breath intervals, percent
    #[arg(long)]
    pub jitter_pct: Option<f64>,
    /// Occupied interval `START:END` in seconds; repeatable
    #[arg(long = "occupied", value_parser = parse_interval)]
    pub occupied: Vec<(f64, f64)>,
    /// Nobody on the furniture for the whole recording
    #[arg(long, conflicts_with = "occupied")]
    pub vacant: bool,
    /// Timestamp of the first sample, ms since the epoch
    #[arg(long)]
    pub start_ms: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EmulateArgs {
    /// Server address [default: 127.0.0.1:7878]
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value = "emulator")]
    pub sensor_id: String,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    /// Send as fast as possible instead of one packet per second
    #[arg(long)]
    pub fast: bool,
    /// Also write the packets sent to this .bcg file
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthFlags,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output file; `.bcg` writes packets, anything else CSV
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    /// Write the ground truth (beat/breath times) as JSON to this file
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthFlags,
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if !(a < b) {
        return Err(format!("interval start {a} must be before end {b}"));
    }
    Ok((a, b))
}
