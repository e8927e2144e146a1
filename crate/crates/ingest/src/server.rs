//! TCP ingestion server: one task and one pipeline per connection, one
//! append-only JSONL file per session.

use std::collections::HashMap;
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use bcg_core::codec::{SamplePacket, PACKET_SIZE};
use bcg_core::{AnalysisConfig, SensorCalibration, StreamPipeline, SAMPLE_RATE_HZ};
use log::{debug, error, info, warn};
use serde::Serialize;
use tokio::fs::{File, OpenOptions};
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinSet;

use crate::protocol::{parse_hello, HelloError, MAX_HELLO_LEN};
use crate::record::{session_file_name, SessionRecord};
use crate::IngestError;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind_addr: String,
    pub storage_dir: PathBuf,
    pub analysis: AnalysisConfig<f64>,
    /// Keyed by sensor id. Sensors without an entry run uncalibrated.
    pub calibrations: HashMap<String, SensorCalibration<f64>>,
    pub hello_timeout: Duration,
}

impl ServerConfig {
    pub fn new(bind_addr: impl Into<String>, storage_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind_addr: bind_addr.into(),
            storage_dir: storage_dir.into(),
            analysis: AnalysisConfig::default(),
            calibrations: HashMap::new(),
            hello_timeout: Duration::from_secs(10),
        }
    }

    pub fn with_calibrations(mut self, calibrations: impl IntoIterator<Item = SensorCalibration<f64>>) -> Self {
        self.calibrations = calibrations.into_iter().map(|c| (c.sensor_id.clone(), c)).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reason")]
pub enum SessionEnd {
    /// Peer closed the connection on a packet boundary.
    Closed,
    Shutdown,
    /// Protocol or storage error; the session was closed, others carry on.
    Failed(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub sensor_id: String,
    pub remote_addr: SocketAddr,
    pub started_ms: i64,
    pub path: PathBuf,
    pub packets_received: u64,
    pub records_written: u64,
    /// Sequence numbers skipped over, summed across all gaps.
    pub seq_gaps: u64,
    pub last_seq: Option<u32>,
    pub end: Option<SessionEnd>,
}

#[derive(Debug, Default)]
struct RegistryInner {
    next_id: u64,
    live: HashMap<u64, SessionSummary>,
    finished: Vec<SessionSummary>,
    rejected: u64,
}

/// Shared view of live and finished sessions.
#[derive(Debug, Clone, Default)]
pub struct Registry(Arc<Mutex<RegistryInner>>);

impl Registry {
    fn lock(&self) -> std::sync::MutexGuard<'_, RegistryInner> {
        // A panicking session must not take the registry down with it.
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn live(&self) -> Vec<SessionSummary> {
        self.lock().live.values().cloned().collect()
    }

    pub fn finished(&self) -> Vec<SessionSummary> {
        self.lock().finished.clone()
    }

    /// Connections closed before a session started (bad hello).
    pub fn rejected(&self) -> u64 {
        self.lock().rejected
    }

    fn open(&self, summary: SessionSummary) -> u64 {
        let mut r = self.lock();
        let id = r.next_id;
        r.next_id += 1;
        r.live.insert(id, summary);
        id
    }

    fn update(&self, id: u64, f: impl FnOnce(&mut SessionSummary)) {
        if let Some(s) = self.lock().live.get_mut(&id) {
            f(s);
        }
    }

    fn close(&self, id: u64, end: SessionEnd) {
        let mut r = self.lock();
        if let Some(mut s) = r.live.remove(&id) {
            s.end = Some(end);
            r.finished.push(s);
        }
    }

    fn reject(&self) {
        self.lock().rejected += 1;
    }
}

struct Shared {
    config: ServerConfig,
    registry: Registry,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

pub(crate) fn now_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as i64)
}

impl Server {
    /// Binds the listener and checks that the storage directory is usable.
    pub async fn bind(config: ServerConfig) -> Result<Server, IngestError> {
        check_storage(&config.storage_dir).await?;
        let listener = TcpListener::bind(&config.bind_addr)
            .await
            .map_err(|source| IngestError::Bind { addr: config.bind_addr.clone(), source })?;
        info!("listening on {}", listener.local_addr().map_err(IngestError::Io)?);
        Ok(Server { listener, shared: Arc::new(Shared { config, registry: Registry::default() }) })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn registry(&self) -> Registry {
        self.shared.registry.clone()
    }

    /// Serves until `shutdown` resolves, then stops accepting, tells live
    /// sessions to finish and waits for them. Returns every session that ran.
    pub async fn run_until<F>(self, shutdown: F) -> Result<Vec<SessionSummary>, IngestError>
    where
        F: Future<Output = ()>,
    {
        let (stop_tx, stop_rx) = watch::channel(false);
        let mut tasks = JoinSet::new();
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                accepted = self.listener.accept() => match accepted {
                    Ok((stream, addr)) => {
                        debug!("connection from {addr}");
                        let shared = self.shared.clone();
                        let stop = stop_rx.clone();
                        tasks.spawn(async move { handle_connection(stream, addr, shared, stop).await });
                    }
                    Err(e) => {
                        // Usually fd exhaustion; back off instead of spinning.
                        warn!("accept failed: {e}");
                        tokio::time::sleep(Duration::from_millis(50)).await;
                    }
                },
                Some(done) = tasks.join_next(), if !tasks.is_empty() => {
                    if let Err(e) = done {
                        error!("session task panicked: {e}");
                    }
                }
            }
        }
        info!("shutting down, waiting for {} session(s)", tasks.len());
        let _ = stop_tx.send(true);
        while let Some(done) = tasks.join_next().await {
            if let Err(e) = done {
                error!("session task panicked: {e}");
            }
        }
        Ok(self.shared.registry.finished())
    }
}

async fn check_storage(dir: &Path) -> Result<(), IngestError> {
    let storage = |source| IngestError::Storage { path: dir.to_path_buf(), source };
    tokio::fs::create_dir_all(dir).await.map_err(storage)?;
    let probe = dir.join(format!(".write-probe-{}", std::process::id()));
    tokio::fs::write(&probe, b"").await.map_err(storage)?;
    tokio::fs::remove_file(&probe).await.map_err(storage)?;
    Ok(())
}

async fn read_hello<R: AsyncRead + Unpin>(reader: &mut BufReader<R>) -> Result<String, HelloError> {
    let mut line = Vec::with_capacity(64);
    let limit = MAX_HELLO_LEN as u64;
    let n = (&mut *reader).take(limit).read_until(b'\n', &mut line).await.map_err(|_| HelloError::Incomplete)?;
    if line.last() != Some(&b'\n') {
        return Err(if n as u64 >= limit { HelloError::TooLong } else { HelloError::Incomplete });
    }
    parse_hello(&line)
}

/// `Ok(None)` on a clean end of stream at a packet boundary.
async fn read_packet<R: AsyncRead + Unpin>(reader: &mut R, buf: &mut [u8; PACKET_SIZE]) -> Result<Option<()>, String> {
    let mut filled = 0;
    while filled < PACKET_SIZE {
        let n = reader.read(&mut buf[filled..]).await.map_err(|e| format!("read failed: {e}"))?;
        if n == 0 {
            return if filled == 0 {
                Ok(None)
            } else {
                Err(format!("stream ended {filled} bytes into a {PACKET_SIZE}-byte packet"))
            };
        }
        filled += n;
    }
    Ok(Some(()))
}

async fn create_session_file(dir: &Path, sensor_id: &str, start_ms: i64) -> io::Result<(File, PathBuf, i64)> {
    // Never reuse an existing file: bump the timestamp until the name is free.
    let mut ts = start_ms;
    loop {
        let path = dir.join(session_file_name(sensor_id, ts));
        match OpenOptions::new().append(true).create_new(true).open(&path).await {
            Ok(f) => return Ok((f, path, ts)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => ts += 1,
            Err(e) => return Err(e),
        }
    }
}

async fn handle_connection(stream: TcpStream, addr: SocketAddr, shared: Arc<Shared>, mut stop: watch::Receiver<bool>) {
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream);
    let config = &shared.config;

    let hello = tokio::select! {
        h = tokio::time::timeout(config.hello_timeout, read_hello(&mut reader)) => h,
        _ = stop.changed() => return,
    };
    let sensor_id = match hello {
        Ok(Ok(id)) => id,
        Ok(Err(e)) => {
            warn!("{addr}: rejected connection: {e}");
            shared.registry.reject();
            return;
        }
        Err(_) => {
            warn!("{addr}: rejected connection: no hello within {:?}", config.hello_timeout);
            shared.registry.reject();
            return;
        }
    };

    let calibration = config.calibrations.get(&sensor_id).cloned();
    if calibration.is_none() {
        info!("{sensor_id}: no calibration, running uncalibrated");
    }
    let mut pipeline = match StreamPipeline::new(config.analysis.clone(), calibration, SAMPLE_RATE_HZ) {
        Ok(p) => p,
        Err(e) => {
            error!("{sensor_id}: cannot start pipeline: {e}");
            shared.registry.reject();
            return;
        }
    };

    let (mut file, path, started_ms) = match create_session_file(&config.storage_dir, &sensor_id, now_ms()).await {
        Ok(x) => x,
        Err(e) => {
            error!("{sensor_id}: cannot create session file: {e}");
            shared.registry.reject();
            return;
        }
    };
    info!("{sensor_id}: session from {addr} -> {}", path.display());
    let id = shared.registry.open(SessionSummary {
        sensor_id: sensor_id.clone(),
        remote_addr: addr,
        started_ms,
        path,
        packets_received: 0,
        records_written: 0,
        seq_gaps: 0,
        last_seq: None,
        end: None,
    });

    let mut buf = [0u8; PACKET_SIZE];
    let mut last_seq: Option<u32> = None;
    let end = loop {
        let read = tokio::select! {
            r = read_packet(&mut reader, &mut buf) => r,
            _ = stop.changed() => break SessionEnd::Shutdown,
        };
        match read {
            Ok(Some(())) => {}
            Ok(None) => break SessionEnd::Closed,
            Err(e) => break SessionEnd::Failed(e),
        }
        let t_ms = now_ms();
        let packet = match SamplePacket::decode(&buf) {
            Ok(p) => p,
            Err(e) => break SessionEnd::Failed(format!("undecodable packet: {e}")),
        };
        let seq = packet.sca10h().seq;
        let gap = match last_seq {
            Some(prev) if seq > prev.wrapping_add(1) && seq > prev => u64::from(seq - prev - 1),
            Some(prev) if seq <= prev => {
                warn!("{sensor_id}: seq went from {prev} to {seq}");
                0
            }
            _ => 0,
        };
        if gap > 0 {
            warn!("{sensor_id}: {gap} packet(s) missing before seq {seq}");
        }
        last_seq = Some(seq);

        let second = match pipeline.process_packet(&packet) {
            Ok(s) => s,
            Err(e) => break SessionEnd::Failed(format!("pipeline: {e}")),
        };
        let mut line = match serde_json::to_vec(&SessionRecord { t_ms, sensor_id: sensor_id.clone(), second }) {
            Ok(l) => l,
            Err(e) => break SessionEnd::Failed(format!("serialise: {e}")),
        };
        line.push(b'\n');
        if let Err(e) = write_line(&mut file, &line).await {
            break SessionEnd::Failed(format!("storage: {e}"));
        }
        shared.registry.update(id, |s| {
            s.packets_received += 1;
            s.records_written += 1;
            s.seq_gaps += gap;
            s.last_seq = Some(seq);
        });
    };

    let _ = file.flush().await;
    match &end {
        SessionEnd::Failed(reason) => warn!("{sensor_id}: session closed: {reason}"),
        other => info!("{sensor_id}: session ended ({other:?})"),
    }
    shared.registry.close(id, end);
}

async fn write_line(file: &mut File, line: &[u8]) -> io::Result<()> {
    file.write_all(line).await?;
    file.flush().await
}
