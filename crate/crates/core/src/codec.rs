//! Fixed-size sensor packet codec.
//!
//! One packet carries one second of data and is always [`PACKET_SIZE`] bytes:
//!
//! ```text
//! offset  size  content
//!      0    46  reference-module frame (Sca10hFrame)
//!     46   400  SCA61T samples, 100 x (x, y), i16 LE, interleaved per sample
//!    446   600  LIS3DHH samples, 100 x (x, y, z), i16 LE, interleaved per sample
//! ```
//!
//! Reference frame (all multi-byte fields little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  seq                  u32
//!      4     8  timestamp_ms         u64
//!     12     2  heart_rate_bpm       u16
//!     14     2  respiration_rate_bpm u16
//!     16     1  occupancy            u8   (0 empty, 1 occupied; anything else is malformed)
//!     17     1  status               u8
//!     18     4  signal_strength      u32
//!     22     6  b2b_time_ms          3 x u16
//!     28     2  hrv_ms               u16
//!     30     2  stroke_volume        u16
//!     32    14  reserved             zero on encode, ignored on decode
//! ```
//!
//! SCA61T readings are 11-bit values sign-extended into the 16-bit fields.

use thiserror::Error;

use crate::scalar::Real;
use crate::types::{raw_to_mg, SensorChannel, SensorKind, SAMPLES_PER_PACKET, SCA61T};

pub const FRAME_SIZE: usize = 46;
pub const SCA61T_AXES: usize = 2;
pub const LIS3DHH_AXES: usize = 3;
pub const SCA61T_BLOCK_OFFSET: usize = FRAME_SIZE;
pub const LIS3DHH_BLOCK_OFFSET: usize = SCA61T_BLOCK_OFFSET + SAMPLES_PER_PACKET * SCA61T_AXES * 2;
pub const PACKET_SIZE: usize = LIS3DHH_BLOCK_OFFSET + SAMPLES_PER_PACKET * LIS3DHH_AXES * 2;

const RESERVED_OFFSET: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("packet must be {PACKET_SIZE} bytes, got {0}")]
    WrongLength(usize),
    #[error("malformed reference frame: {0}")]
    MalformedFrame(String),
    #[error("SCA61T sample {value} at index {index} exceeds the 11-bit range")]
    SampleOutOfRange { index: usize, value: i16 },
    #[error("transmission period must be positive, got {0}")]
    NonPositivePeriod(f64),
}

/// Vitals summary emitted once per second by the reference BCG module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Sca10hFrame {
    pub seq: u32,
    pub timestamp_ms: u64,
    pub heart_rate_bpm: u16,
    pub respiration_rate_bpm: u16,
    pub occupied: bool,
    pub status: u8,
    pub signal_strength: u32,
    pub b2b_time_ms: [u16; 3],
    pub hrv_ms: u16,
    pub stroke_volume: u16,
}

impl Sca10hFrame {
    pub fn encode_into(&self, out: &mut [u8; FRAME_SIZE]) {
        out[0..4].copy_from_slice(&self.seq.to_le_bytes());
        out[4..12].copy_from_slice(&self.timestamp_ms.to_le_bytes());
        out[12..14].copy_from_slice(&self.heart_rate_bpm.to_le_bytes());
        out[14..16].copy_from_slice(&self.respiration_rate_bpm.to_le_bytes());
        out[16] = u8::from(self.occupied);
        out[17] = self.status;
        out[18..22].copy_from_slice(&self.signal_strength.to_le_bytes());
        for (i, b2b) in self.b2b_time_ms.iter().enumerate() {
            out[22 + 2 * i..24 + 2 * i].copy_from_slice(&b2b.to_le_bytes());
        }
        out[28..30].copy_from_slice(&self.hrv_ms.to_le_bytes());
        out[30..32].copy_from_slice(&self.stroke_volume.to_le_bytes());
        out[RESERVED_OFFSET..].fill(0);
    }

    pub fn decode(bytes: &[u8; FRAME_SIZE]) -> Result<Self, CodecError> {
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let occupied = match bytes[16] {
            0 => false,
            1 => true,
            other => return Err(CodecError::MalformedFrame(format!("occupancy byte {other}"))),
        };
        Ok(Sca10hFrame {
            seq: u32_at(0),
            timestamp_ms: u64::from_le_bytes(bytes[4..12].try_into().unwrap()),
            heart_rate_bpm: u16_at(12),
            respiration_rate_bpm: u16_at(14),
            occupied,
            status: bytes[17],
            signal_strength: u32_at(18),
            b2b_time_ms: [u16_at(22), u16_at(24), u16_at(26)],
            hrv_ms: u16_at(28),
            stroke_volume: u16_at(30),
        })
    }
}

/// One second of sensor data as sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePacket {
    sca10h: Sca10hFrame,
    sca61t: [[i16; SCA61T_AXES]; SAMPLES_PER_PACKET],
    lis3dhh: [[i16; LIS3DHH_AXES]; SAMPLES_PER_PACKET],
}

impl SamplePacket {
    pub fn new(
        sca10h: Sca10hFrame,
        sca61t: [[i16; SCA61T_AXES]; SAMPLES_PER_PACKET],
        lis3dhh: [[i16; LIS3DHH_AXES]; SAMPLES_PER_PACKET],
    ) -> Result<Self, CodecError> {
        check_sca61t(&sca61t)?;
        Ok(SamplePacket { sca10h, sca61t, lis3dhh })
    }

    pub fn sca10h(&self) -> &Sca10hFrame {
        &self.sca10h
    }

    pub fn sca61t(&self) -> &[[i16; SCA61T_AXES]; SAMPLES_PER_PACKET] {
        &self.sca61t
    }

    pub fn lis3dhh(&self) -> &[[i16; LIS3DHH_AXES]; SAMPLES_PER_PACKET] {
        &self.lis3dhh
    }

    /// Raw readings of one channel, in sample order.
    pub fn channel_raw(&self, channel: SensorChannel) -> [i16; SAMPLES_PER_PACKET] {
        let axis = channel.axis().index();
        match channel.sensor() {
            SensorKind::Sca61t => std::array::from_fn(|i| self.sca61t[i][axis]),
            SensorKind::Lis3dhh => std::array::from_fn(|i| self.lis3dhh[i][axis]),
        }
    }

    /// One channel converted to milli-g.
    pub fn channel_mg<T: Real>(&self, channel: SensorChannel) -> Vec<T> {
        let spec = channel.spec();
        self.channel_raw(channel)
            .iter()
            // Range was checked at construction, so conversion cannot fail.
            .map(|&raw| raw_to_mg(i32::from(raw), spec).unwrap_or_else(|_| T::zero()))
            .collect()
    }

    pub fn encode(&self) -> [u8; PACKET_SIZE] {
        let mut out = [0u8; PACKET_SIZE];
        let frame: &mut [u8; FRAME_SIZE] = (&mut out[..FRAME_SIZE]).try_into().unwrap();
        self.sca10h.encode_into(frame);
        let mut o = SCA61T_BLOCK_OFFSET;
        for v in self.sca61t.iter().flatten() {
            out[o..o + 2].copy_from_slice(&v.to_le_bytes());
            o += 2;
        }
        debug_assert_eq!(o, LIS3DHH_BLOCK_OFFSET);
        for v in self.lis3dhh.iter().flatten() {
            out[o..o + 2].copy_from_slice(&v.to_le_bytes());
            o += 2;
        }
        debug_assert_eq!(o, PACKET_SIZE);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != PACKET_SIZE {
            return Err(CodecError::WrongLength(bytes.len()));
        }
        let frame: &[u8; FRAME_SIZE] = bytes[..FRAME_SIZE].try_into().unwrap();
        let sca10h = Sca10hFrame::decode(frame)?;
        let i16_at = |o: usize| i16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let sca61t =
            std::array::from_fn(|i| std::array::from_fn(|a| i16_at(SCA61T_BLOCK_OFFSET + 2 * (i * SCA61T_AXES + a))));
        let lis3dhh =
            std::array::from_fn(|i| std::array::from_fn(|a| i16_at(LIS3DHH_BLOCK_OFFSET + 2 * (i * LIS3DHH_AXES + a))));
        SamplePacket::new(sca10h, sca61t, lis3dhh)
    }
}

fn check_sca61t(samples: &[[i16; SCA61T_AXES]; SAMPLES_PER_PACKET]) -> Result<(), CodecError> {
    let (lo, hi) = (SCA61T.raw_min(), SCA61T.raw_max());
    for (index, &value) in samples.iter().flatten().enumerate() {
        if i32::from(value) < lo || i32::from(value) > hi {
            return Err(CodecError::SampleOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Splits a packet dump into packets. The length must be a multiple of
/// [`PACKET_SIZE`].
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<SamplePacket>, CodecError> {
    if bytes.len() % PACKET_SIZE != 0 {
        return Err(CodecError::WrongLength(bytes.len() % PACKET_SIZE));
    }
    bytes.chunks_exact(PACKET_SIZE).map(SamplePacket::decode).collect()
}

/// Minimum link rate in bits/s for one packet of `packet_size_bytes` every
/// `period_s` seconds.
pub fn min_bitrate_bps(packet_size_bytes: usize, period_s: f64) -> Result<f64, CodecError> {
    if !(period_s > 0.0) {
        return Err(CodecError::NonPositivePeriod(period_s));
    }
    Ok(packet_size_bytes as f64 * 8.0 / period_s)
}
