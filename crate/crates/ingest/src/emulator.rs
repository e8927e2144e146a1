//! Sensor emulator: connects, sends the hello line, streams packets.

use std::time::Duration;

use bcg_core::codec::SamplePacket;
use bcg_core::synth::{generate_packets, SynthParams};
use log::{debug, warn};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::time::MissedTickBehavior;

use crate::protocol::{hello_line, validate_sensor_id};
use crate::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pace {
    /// One packet per second, like the hardware.
    RealTime,
    /// As fast as the socket accepts them.
    Fast,
}

/// How long to wait for the server to close its side after we finish.
const DRAIN_TIMEOUT: Duration = Duration::from_secs(30);

/// Streams `packets` to `target` as sensor `sensor_id`. Returns once the
/// server has closed the connection (so everything sent has been processed)
/// or after a drain timeout.
pub async fn emulate(
    target: &str,
    sensor_id: &str,
    packets: &[SamplePacket],
    pace: Pace,
) -> Result<usize, IngestError> {
    validate_sensor_id(sensor_id)?;
    let connect = |source| IngestError::Connect { target: target.to_string(), source };
    let mut stream = TcpStream::connect(target).await.map_err(connect)?;
    let _ = stream.set_nodelay(true);
    stream.write_all(hello_line(sensor_id).as_bytes()).await.map_err(connect)?;

    let mut ticker = tokio::time::interval(Duration::from_secs(1));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    for (i, p) in packets.iter().enumerate() {
        if pace == Pace::RealTime {
            ticker.tick().await;
        }
        stream.write_all(&p.encode()).await.map_err(connect)?;
        debug!("{sensor_id}: sent packet {i}");
    }
    stream.shutdown().await.map_err(connect)?;

    let mut sink = [0u8; 256];
    let drained = tokio::time::timeout(DRAIN_TIMEOUT, async {
        loop {
            match stream.read(&mut sink).await {
                Ok(0) | Err(_) => break,
                Ok(_) => {}
            }
        }
    })
    .await;
    if drained.is_err() {
        warn!("{sensor_id}: server did not close the connection within {DRAIN_TIMEOUT:?}");
    }
    Ok(packets.len())
}

/// Generates `duration_s` of synthetic packets and streams them.
pub async fn emulate_synth(
    target: &str,
    sensor_id: &str,
    params: &SynthParams,
    duration_s: f64,
    pace: Pace,
) -> Result<Vec<SamplePacket>, IngestError> {
    let packets = generate_packets(params, duration_s)?;
    emulate(target, sensor_id, &packets, pace).await?;
    Ok(packets)
}
