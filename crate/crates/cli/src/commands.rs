use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use bcg_core::pipeline::calibrate_sensor;
use bcg_core::synth::{generate_bcg, generate_packets, packetize};
use bcg_core::types::SAMPLES_PER_PACKET;
use bcg_core::{
    read_calibrations, scalogram, AnalysisConfigF64, MorletParams, OccupancyTransition, PipelineError, SecondRecordF64,
    SensorCalibrationF64, StreamPipelineF64, SAMPLE_RATE_HZ,
};
use bcg_ingest::{emulate, IngestError, Pace, Server, ServerConfig};
use log::{info, warn};

use crate::args::{AnalyzeArgs, CalibrateArgs, EmulateArgs, OutputFormat, ScalogramArgs, ServeArgs, SynthArgs};
use crate::config::{synth_params, FileConfig, DEFAULT_BIND, DEFAULT_HELLO_TIMEOUT_S, DEFAULT_STORAGE};
use crate::signal::{find_channel, is_packet_dump, read_signal, write_csv, write_packets, SignalFile};
use crate::CliError;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn pipeline_err(e: PipelineError) -> CliError {
    match e {
        PipelineError::MissingChannel(_) => CliError::Input(e.to_string()),
        other => CliError::Calibration(other.to_string()),
    }
}

/// Loads one entry of a calibration file: the one named `sensor_id`, or the
/// only entry if no id is given.
pub fn load_calibration(path: &Path, sensor_id: Option<&str>) -> Result<SensorCalibrationF64, CliError> {
    let all = load_calibrations(path)?;
    match sensor_id {
        Some(id) => all
            .into_iter()
            .find(|c| c.sensor_id == id)
            .ok_or_else(|| CliError::Calibration(format!("{}: no entry for sensor {id:?}", path.display()))),
        None if all.len() == 1 => Ok(all.into_iter().next().unwrap()),
        None => {
            Err(CliError::Calibration(format!("{}: {} entries; pick one with --sensor-id", path.display(), all.len())))
        }
    }
}

pub fn load_calibrations(path: &Path) -> Result<Vec<SensorCalibrationF64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Calibration(format!("{}: {e}", path.display())))?;
    read_calibrations(io::BufReader::new(file)).map_err(|e| CliError::Calibration(format!("{}: {e}", path.display())))
}

/// Runs the streaming pipeline over a whole recording, one record per second.
/// Packet dumps go through exactly the code path the server uses.
pub fn analyze_signal(
    input: SignalFile,
    config: &AnalysisConfigF64,
    calibration: Option<SensorCalibrationF64>,
) -> Result<(Vec<SecondRecordF64>, Vec<OccupancyTransition<f64>>), CliError> {
    let uncalibrated_csv = matches!(input, SignalFile::Samples(_)) && calibration.is_none();
    if uncalibrated_csv {
        return Err(CliError::Calibration(
            "CSV input carries no reference occupancy; analysis needs --calibration".into(),
        ));
    }
    let mut pipeline = StreamPipelineF64::new(config.clone(), calibration, SAMPLE_RATE_HZ).map_err(pipeline_err)?;
    let mut records = Vec::new();
    let mut events = Vec::new();
    match input {
        SignalFile::Packets(packets) => {
            for p in &packets {
                records.push(pipeline.process_packet(p).map_err(pipeline_err)?);
                events.extend(pipeline.drain_transitions());
            }
        }
        SignalFile::Samples(series) => {
            let n = series.iter().map(|s| s.len()).min().unwrap_or(0);
            if n % SAMPLES_PER_PACKET != 0 {
                warn!("dropping the trailing {} samples of an incomplete second", n % SAMPLES_PER_PACKET);
            }
            let t0 = series[0].t0_ms;
            for k in 0..n / SAMPLES_PER_PACKET {
                let range = k * SAMPLES_PER_PACKET..(k + 1) * SAMPLES_PER_PACKET;
                let samples = |ch| series.iter().find(|s| s.channel == ch).map(|s| s.values[range.clone()].to_vec());
                let rec = pipeline.process_second(k as u32, t0 + 1000 * k as i64, samples, None);
                records.push(rec.map_err(pipeline_err)?);
                events.extend(pipeline.drain_transitions());
            }
        }
    }
    Ok((records, events))
}

pub fn write_records<W: Write>(records: &[SecondRecordF64], format: OutputFormat, out: W) -> io::Result<()> {
    match format {
        OutputFormat::Jsonl => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            if records.is_empty() {
                w.write_record(CSV_COLUMNS)?;
            }
            w.flush()
        }
    }
}

const CSV_COLUMNS: [&str; 10] = [
    "seq",
    "frame_t_ms",
    "occupied",
    "heart_bpm",
    "resp_bpm",
    "provisional",
    "sca10h_heart_bpm",
    "sca10h_resp_bpm",
    "sca10h_occupied",
    "uncalibrated",
];

pub fn analyze(args: &AnalyzeArgs, file: &FileConfig) -> Result<(), CliError> {
    let input = read_signal(&args.input)?;
    let calibration = match &args.calibration {
        Some(p) => Some(load_calibration(p, args.sensor_id.as_deref())?),
        None => None,
    };
    if calibration.is_none() {
        warn!("no calibration: occupancy is taken from the reference frames and vitals are not estimated");
    }
    let (records, events) = analyze_signal(input, &file.analysis, calibration)?;
    let total = records.len();
    let rows: Vec<_> = records.into_iter().filter(|r| args.all_seconds || r.occupied).collect();
    info!("{} of {total} seconds occupied, {} transition(s)", rows.iter().filter(|r| r.occupied).count(), events.len());
    let out_path = args.out.as_deref();
    write_records(&rows, args.format, output(out_path)?).map_err(|e| CliError::io_opt(out_path, e))?;
    if let Some(p) = &args.events {
        let mut w = output(Some(p))?;
        for e in &events {
            serde_json::to_writer(&mut w, e).map_err(|e| CliError::io(p, e.into()))?;
            w.write_all(b"\n").map_err(|e| CliError::io(p, e))?;
        }
        w.flush().map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

/// `n` log-spaced frequencies from `fmin` to `fmax` inclusive.
pub fn log_spaced(fmin: f64, fmax: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if !(fmin > 0.0 && fmax >= fmin && fmax.is_finite()) || n == 0 {
        return Err(CliError::Usage(format!("bad frequency grid {fmin}..{fmax} Hz x {n}")));
    }
    if n == 1 {
        return Ok(vec![fmin]);
    }
    if fmax == fmin {
        return Err(CliError::Usage("fmin == fmax needs --nfreqs 1".into()));
    }
    let ratio = (fmax / fmin).ln();
    Ok((0..n).map(|i| fmin * (ratio * i as f64 / (n - 1) as f64).exp()).collect())
}

pub fn scalogram_cmd(args: &ScalogramArgs, file: &FileConfig) -> Result<(), CliError> {
    let freqs = match &args.freqs {
        Some(f) => f.clone(),
        None => log_spaced(args.fmin, args.fmax, args.nfreqs)?,
    };
    let series = read_signal(&args.input)?.into_series();
    let signal = find_channel(&series, args.channel, &args.input)?;
    if signal.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", args.input.display())));
    }
    let params = MorletParams::new(file.analysis.morlet_omega0).map_err(|e| CliError::Usage(e.to_string()))?;
    let sg = scalogram(&signal, &freqs, &params).map_err(|e| CliError::Usage(e.to_string()))?;
    let out_path = args.out.as_deref();
    sg.write_csv(output(out_path)?).map_err(|e| CliError::io_opt(out_path, e))
}

pub fn calibrate(args: &CalibrateArgs, file: &FileConfig) -> Result<(), CliError> {
    let empty = read_signal(&args.empty)?.into_series();
    let occupied = read_signal(&args.occupied)?.into_series();
    let calib = match &args.calib {
        Some(p) => Some(find_channel(&read_signal(p)?.into_series(), args.vitals_channel, p)?),
        None => None,
    };
    bcg_ingest::protocol::validate_sensor_id(&args.sensor_id).map_err(|e| CliError::Usage(e.to_string()))?;
    let cal = calibrate_sensor(&args.sensor_id, &empty, &occupied, calib.as_ref(), args.vitals_channel, &file.analysis)
        .map_err(pipeline_err)?;
    let mut line = serde_json::to_string(&cal).expect("calibration serialises");
    line.push('\n');
    match &args.out {
        Some(p) => {
            let mut f = OpenOptions::new()
                .create(true)
                .write(true)
                .append(args.append)
                .truncate(!args.append)
                .open(p)
                .map_err(|e| CliError::io(p, e))?;
            f.write_all(line.as_bytes()).map_err(|e| CliError::io(p, e))
        }
        None => io::stdout().write_all(line.as_bytes()).map_err(|e| CliError::io_opt(None, e)),
    }
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Network(format!("cannot start async runtime: {e}")))
}

fn ingest_err(e: IngestError) -> CliError {
    match e {
        IngestError::Bind { .. } | IngestError::Connect { .. } | IngestError::Io(_) => CliError::Network(e.to_string()),
        IngestError::Storage { .. } => CliError::Input(e.to_string()),
        IngestError::Hello(_) | IngestError::Synth(_) => CliError::Usage(e.to_string()),
    }
}

pub fn serve(args: &ServeArgs, file: &FileConfig) -> Result<(), CliError> {
    let bind = args.bind.clone().or_else(|| file.serve.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.into());
    let storage: PathBuf =
        args.storage.clone().or_else(|| file.serve.storage.clone()).unwrap_or_else(|| DEFAULT_STORAGE.into());
    let hello_timeout_s = args.hello_timeout_s.or(file.serve.hello_timeout_s).unwrap_or(DEFAULT_HELLO_TIMEOUT_S);
    let hello_timeout = Duration::try_from_secs_f64(hello_timeout_s)
        .map_err(|_| CliError::Usage(format!("bad hello timeout {hello_timeout_s}")))?;
    let calibrations = match args.calibration.as_ref().or(file.serve.calibration.as_ref()) {
        Some(p) => load_calibrations(p)?,
        None => Vec::new(),
    };
    info!("{} sensor calibration(s) loaded", calibrations.len());
    let mut config = ServerConfig::new(bind, storage).with_calibrations(calibrations);
    config.analysis = file.analysis.clone();
    config.hello_timeout = hello_timeout;

    runtime()?.block_on(async {
        let server = Server::bind(config).await.map_err(ingest_err)?;
        let addr = server.local_addr().map_err(|e| CliError::Network(e.to_string()))?;
        // Machine-readable so scripts binding port 0 can find the port.
        println!("listening on {addr}");
        let _ = io::stdout().flush();
        let sessions = server.run_until(shutdown_signal()).await.map_err(ingest_err)?;
        for s in &sessions {
            info!(
                "{} from {}: {} packets, {} missing, ended {:?}",
                s.sensor_id, s.remote_addr, s.packets_received, s.seq_gaps, s.end
            );
        }
        Ok(())
    })
}

fn now_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub fn emulate_cmd(args: &EmulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let target = args.target.clone().or_else(|| file.emulate.target.clone()).unwrap_or_else(|| DEFAULT_BIND.into());
    let mut params = synth_params(&file.synth, &args.synth);
    if args.synth.start_ms.is_none() && file.synth.start_ms == 0 {
        params.start_ms = now_ms();
    }
    bcg_ingest::protocol::validate_sensor_id(&args.sensor_id).map_err(|e| CliError::Usage(e.to_string()))?;
    let packets = generate_packets(&params, args.duration_s).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = &args.dump {
        let f = File::create(p).map_err(|e| CliError::io(p, e))?;
        write_packets(&packets, BufWriter::new(f)).map_err(|e| CliError::io(p, e))?;
    }
    let pace = if args.fast { Pace::Fast } else { Pace::RealTime };
    let sent = runtime()?.block_on(emulate(&target, &args.sensor_id, &packets, pace)).map_err(ingest_err)?;
    info!("sent {sent} packets to {target} as {}", args.sensor_id);
    Ok(())
}

pub fn synth_cmd(args: &SynthArgs, file: &FileConfig) -> Result<(), CliError> {
    let params = synth_params(&file.synth, &args.synth);
    let usage = |e: bcg_core::SynthError| CliError::Usage(e.to_string());
    let rec = generate_bcg::<f64>(&params, args.duration_s).map_err(usage)?;
    let out = &args.out;
    let f = BufWriter::new(File::create(out).map_err(|e| CliError::io(out, e))?);
    if is_packet_dump(out) {
        if args.duration_s.fract() != 0.0 {
            return Err(usage(bcg_core::SynthError::FractionalDuration(args.duration_s)));
        }
        write_packets(&packetize(&params, &rec), f).map_err(|e| CliError::io(out, e))?;
    } else {
        write_csv(&rec.channels, f).map_err(|e| CliError::io(out, e))?;
    }
    if let Some(p) = &args.truth {
        let json = serde_json::to_vec_pretty(&rec.truth).expect("ground truth serialises");
        fs::write(p, json).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}
