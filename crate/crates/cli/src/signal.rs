//! Signal files: packet dumps (`.bcg`, concatenated 1046-byte packets) and
//! CSV with header `t_ms,sensor,axis,mg`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use bcg_core::codec::{SamplePacket, PACKET_SIZE};
use bcg_core::{AccelSeriesF64, SensorChannel, SAMPLE_RATE_HZ};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub enum SignalFile {
    Packets(Vec<SamplePacket>),
    /// One gap-free series per channel, all starting at the same time.
    Samples(Vec<AccelSeriesF64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t_ms: i64,
    sensor: String,
    axis: String,
    mg: f64,
}

pub fn is_packet_dump(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bcg"))
}

fn input_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {msg}", path.display()))
}

pub fn read_signal(path: &Path) -> Result<SignalFile, CliError> {
    if is_packet_dump(path) {
        read_packets(path).map(SignalFile::Packets)
    } else {
        read_csv(path).map(SignalFile::Samples)
    }
}

pub fn read_packets(path: &Path) -> Result<Vec<SamplePacket>, CliError> {
    let bytes = fs::read(path).map_err(|e| input_err(path, e))?;
    if bytes.len() % PACKET_SIZE != 0 {
        return Err(input_err(
            path,
            format!(
                "length {} is not a multiple of {PACKET_SIZE}: {} packet(s) plus a partial packet of {} bytes",
                bytes.len(),
                bytes.len() / PACKET_SIZE,
                bytes.len() % PACKET_SIZE
            ),
        ));
    }
    bytes
        .chunks_exact(PACKET_SIZE)
        .enumerate()
        .map(|(i, c)| SamplePacket::decode(c).map_err(|e| input_err(path, format!("packet {i}: {e}"))))
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<AccelSeriesF64>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| input_err(path, e))?;
    let headers = reader.headers().map_err(|e| input_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_ms", "sensor", "axis", "mg"] {
        return Err(input_err(path, "expected header `t_ms,sensor,axis,mg`"));
    }
    let period_ms = 1000.0 / SAMPLE_RATE_HZ;
    let mut channels: BTreeMap<SensorChannel, (i64, i64, Vec<f64>)> = BTreeMap::new();
    for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
        let line = line + 2;
        let row = row.map_err(|e| input_err(path, format!("line {line}: {e}")))?;
        let ch: SensorChannel =
            format!("{}.{}", row.sensor, row.axis).parse().map_err(|e| input_err(path, format!("line {line}: {e}")))?;
        if !row.mg.is_finite() {
            return Err(input_err(path, format!("line {line}: non-finite value")));
        }
        let entry = channels.entry(ch).or_insert((row.t_ms, row.t_ms, Vec::new()));
        if !entry.2.is_empty() {
            let expected = entry.0 as f64 + entry.2.len() as f64 * period_ms;
            if row.t_ms <= entry.1 {
                return Err(input_err(path, format!("line {line}: {ch} is not time-sorted")));
            }
            if (row.t_ms as f64 - expected).abs() > 1.0 {
                return Err(input_err(
                    path,
                    format!("line {line}: {ch} jumps to {} ms, expected {expected} ms (gap or wrong rate)", row.t_ms),
                ));
            }
        }
        entry.1 = row.t_ms;
        entry.2.push(row.mg);
    }
    if channels.is_empty() {
        return Err(input_err(path, "no samples"));
    }
    let mut series: Vec<_> =
        channels.into_iter().map(|(ch, (t0, _, values))| AccelSeriesF64::new(ch, t0, values)).collect();
    series.sort_by_key(|s| SensorChannel::ALL.iter().position(|&c| c == s.channel));
    if series.iter().any(|s| s.t0_ms != series[0].t0_ms) {
        return Err(input_err(path, "channels start at different times"));
    }
    Ok(series)
}

/// Concatenates the packets' samples into one series per channel.
pub fn packets_to_series(packets: &[SamplePacket]) -> Vec<AccelSeriesF64> {
    let t0 = packets.first().map_or(0, |p| p.sca10h().timestamp_ms as i64);
    SensorChannel::ALL
        .iter()
        .map(|&ch| {
            let values = packets.iter().flat_map(|p| p.channel_mg::<f64>(ch)).collect();
            AccelSeriesF64::new(ch, t0, values)
        })
        .collect()
}

impl SignalFile {
    pub fn into_series(self) -> Vec<AccelSeriesF64> {
        match self {
            SignalFile::Packets(p) => packets_to_series(&p),
            SignalFile::Samples(s) => s,
        }
    }
}

pub fn find_channel(series: &[AccelSeriesF64], ch: SensorChannel, path: &Path) -> Result<AccelSeriesF64, CliError> {
    series.iter().find(|s| s.channel == ch).cloned().ok_or_else(|| input_err(path, format!("no {ch} samples")))
}

pub fn write_packets<W: Write>(packets: &[SamplePacket], mut out: W) -> io::Result<()> {
    for p in packets {
        out.write_all(&p.encode())?;
    }
    out.flush()
}

/// Interleaved by time, channels in packet order.
pub fn write_csv<W: Write>(series: &[AccelSeriesF64], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = series.iter().map(|s| s.len()).min().unwrap_or(0);
    for i in 0..n {
        for s in series {
            w.serialize(CsvRow {
                t_ms: s.time_ms(i),
                sensor: s.channel.sensor().to_string(),
                axis: s.channel.axis().to_string(),
                mg: s.values[i],
            })?;
        }
    }
    if n == 0 {
        w.write_record(["t_ms", "sensor", "axis", "mg"])?;
    }
    w.flush()
}
