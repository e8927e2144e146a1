//! Sensor identities, physical-unit conversion, sampled series and analysis
//! configuration.
//!
//! All signal processing runs in milli-g. Raw LSB counts only exist at the
//! packet boundary and are converted with [`raw_to_mg`] / [`mg_to_raw`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Real;

/// Sample rate of every accelerometer channel in the packet format.
pub const SAMPLE_RATE_HZ: f64 = 100.0;

/// Samples per channel carried by one packet (one second at 100 Hz).
pub const SAMPLES_PER_PACKET: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypesError {
    #[error("SCA61T has no {0} axis")]
    AxisUnavailable(Axis),
    #[error("unknown sensor channel `{0}`")]
    UnknownChannel(String),
    #[error("raw value {raw} does not fit in {bits}-bit two's complement")]
    RawOutOfRange { raw: i32, bits: u32 },
    #[error("series mismatch: {0}")]
    SeriesMismatch(&'static str),
    #[error("sample rate must be positive")]
    BadSampleRate,
    #[error("invalid analysis config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    Lis3dhh,
    Sca61t,
}

impl SensorKind {
    pub fn spec(self) -> &'static SensorSpec {
        match self {
            SensorKind::Lis3dhh => &LIS3DHH,
            SensorKind::Sca61t => &SCA61T,
        }
    }

    /// Axes the sensor reports, in wire order.
    pub fn axes(self) -> &'static [Axis] {
        match self {
            SensorKind::Lis3dhh => &[Axis::X, Axis::Y, Axis::Z],
            SensorKind::Sca61t => &[Axis::X, Axis::Y],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Lis3dhh => "LIS3DHH",
            SensorKind::Sca61t => "SCA61T",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        })
    }
}

/// A (sensor, axis) pair. `(SCA61T, Z)` cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensorChannel {
    sensor: SensorKind,
    axis: Axis,
}

impl SensorChannel {
    pub const LIS3DHH_X: SensorChannel = SensorChannel { sensor: SensorKind::Lis3dhh, axis: Axis::X };
    pub const LIS3DHH_Y: SensorChannel = SensorChannel { sensor: SensorKind::Lis3dhh, axis: Axis::Y };
    pub const LIS3DHH_Z: SensorChannel = SensorChannel { sensor: SensorKind::Lis3dhh, axis: Axis::Z };
    pub const SCA61T_X: SensorChannel = SensorChannel { sensor: SensorKind::Sca61t, axis: Axis::X };
    pub const SCA61T_Y: SensorChannel = SensorChannel { sensor: SensorKind::Sca61t, axis: Axis::Y };

    /// Every valid channel, in packet order.
    pub const ALL: [SensorChannel; 5] =
        [Self::SCA61T_X, Self::SCA61T_Y, Self::LIS3DHH_X, Self::LIS3DHH_Y, Self::LIS3DHH_Z];

    pub fn new(sensor: SensorKind, axis: Axis) -> Result<Self, TypesError> {
        if sensor == SensorKind::Sca61t && axis == Axis::Z {
            return Err(TypesError::AxisUnavailable(axis));
        }
        Ok(SensorChannel { sensor, axis })
    }

    pub fn sensor(self) -> SensorKind {
        self.sensor
    }

    pub fn axis(self) -> Axis {
        self.axis
    }

    pub fn spec(self) -> &'static SensorSpec {
        self.sensor.spec()
    }

    /// Axes parallel to the ground in the reference mounting (X and Y).
    pub fn is_ground_parallel(self) -> bool {
        matches!(self.axis, Axis::X | Axis::Y)
    }
}

impl fmt::Display for SensorChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.sensor, self.axis)
    }
}

impl FromStr for SensorChannel {
    type Err = TypesError;

    /// Accepts `LIS3DHH.X`, `lis3dhh:x`, `SCA61T-Y`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || TypesError::UnknownChannel(s.to_string());
        let (sensor, axis) = s.trim().split_once(['.', ':', '-', '/']).ok_or_else(unknown)?;
        let sensor = match sensor.to_ascii_uppercase().as_str() {
            "LIS3DHH" => SensorKind::Lis3dhh,
            "SCA61T" => SensorKind::Sca61t,
            _ => return Err(unknown()),
        };
        let axis = parse_axis(axis).ok_or_else(unknown)?;
        SensorChannel::new(sensor, axis)
    }
}

pub(crate) fn parse_axis(s: &str) -> Option<Axis> {
    match s.trim().to_ascii_uppercase().as_str() {
        "X" => Some(Axis::X),
        "Y" => Some(Axis::Y),
        "Z" => Some(Axis::Z),
        _ => None,
    }
}

impl Serialize for SensorChannel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SensorChannel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Datasheet parameters of an accelerometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub range_g: f64,
    pub bits: u32,
    pub sensitivity_mg_per_lsb: f64,
    pub noise_density_ug_per_rthz: f64,
}

pub const LIS3DHH: SensorSpec =
    SensorSpec { range_g: 2.5, bits: 16, sensitivity_mg_per_lsb: 0.076, noise_density_ug_per_rthz: 45.0 };

pub const SCA61T: SensorSpec =
    SensorSpec { range_g: 1.0, bits: 11, sensitivity_mg_per_lsb: 1.22, noise_density_ug_per_rthz: 14.0 };

impl SensorSpec {
    pub fn raw_min(&self) -> i32 {
        -(1 << (self.bits - 1))
    }

    pub fn raw_max(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// Per-sample white-noise standard deviation in milli-g at `sample_rate_hz`.
    pub fn noise_sigma_mg(&self, sample_rate_hz: f64) -> f64 {
        self.noise_density_ug_per_rthz * 1e-3 * (sample_rate_hz / 2.0).sqrt()
    }
}

/// Converts a raw two's-complement reading to milli-g.
pub fn raw_to_mg<T: Real>(raw: i32, spec: &SensorSpec) -> Result<T, TypesError> {
    if raw < spec.raw_min() || raw > spec.raw_max() {
        return Err(TypesError::RawOutOfRange { raw, bits: spec.bits });
    }
    Ok(T::lit(raw as f64 * spec.sensitivity_mg_per_lsb))
}

/// Nearest raw reading for `mg`, saturated to the sensor's bit range.
pub fn mg_to_raw<T: Real>(mg: T, spec: &SensorSpec) -> i32 {
    let lsb = mg.to_f64_lossy() / spec.sensitivity_mg_per_lsb;
    if lsb.is_nan() {
        return 0;
    }
    let rounded = lsb.round();
    if rounded <= spec.raw_min() as f64 {
        spec.raw_min()
    } else if rounded >= spec.raw_max() as f64 {
        spec.raw_max()
    } else {
        rounded as i32
    }
}

/// A gap-free, uniformly sampled acceleration channel in milli-g.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelSeries<T> {
    pub channel: SensorChannel,
    sample_rate_hz: T,
    /// Time of sample 0, milliseconds since the epoch.
    pub t0_ms: i64,
    pub values: Vec<T>,
}

impl<T: Real> AccelSeries<T> {
    /// A series at the packet-format rate of 100 Hz.
    pub fn new(channel: SensorChannel, t0_ms: i64, values: Vec<T>) -> Self {
        AccelSeries { channel, sample_rate_hz: T::lit(SAMPLE_RATE_HZ), t0_ms, values }
    }

    pub fn with_sample_rate(
        channel: SensorChannel,
        sample_rate_hz: T,
        t0_ms: i64,
        values: Vec<T>,
    ) -> Result<Self, TypesError> {
        if !(sample_rate_hz > T::zero()) || !sample_rate_hz.is_finite() {
            return Err(TypesError::BadSampleRate);
        }
        Ok(AccelSeries { channel, sample_rate_hz, t0_ms, values })
    }

    pub fn sample_rate_hz(&self) -> T {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> T {
        T::from_usize_lossy(self.values.len()) / self.sample_rate_hz
    }

    pub fn sample_period_ms(&self) -> f64 {
        1000.0 / self.sample_rate_hz.to_f64_lossy()
    }

    /// Timestamp of sample `i` in ms (exact multiples of 10 ms at 100 Hz).
    pub fn time_ms(&self, i: usize) -> i64 {
        self.t0_ms + (i as f64 * self.sample_period_ms()).round() as i64
    }

    /// Timestamp one sample past the end; the `t0_ms` an adjacent block must have.
    pub fn end_ms(&self) -> i64 {
        self.time_ms(self.values.len())
    }

    /// Appends an adjacent block of the same channel and rate.
    pub fn concat(&self, next: &AccelSeries<T>) -> Result<AccelSeries<T>, TypesError> {
        if next.channel != self.channel {
            return Err(TypesError::SeriesMismatch("different channels"));
        }
        if next.sample_rate_hz != self.sample_rate_hz {
            return Err(TypesError::SeriesMismatch("different sample rates"));
        }
        if next.t0_ms != self.end_ms() {
            return Err(TypesError::SeriesMismatch("blocks are not adjacent"));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&next.values);
        Ok(AccelSeries { values, ..self.clone() })
    }

    pub fn mean(&self) -> T {
        mean(&self.values)
    }

    /// Samples from `start_s` (inclusive) to `end_s` (exclusive), relative to t0.
    pub fn slice_s(&self, start_s: f64, end_s: f64) -> AccelSeries<T> {
        let fs = self.sample_rate_hz.to_f64_lossy();
        let lo = ((start_s * fs).round().max(0.0) as usize).min(self.values.len());
        let hi = ((end_s * fs).round().max(0.0) as usize).clamp(lo, self.values.len());
        AccelSeries {
            channel: self.channel,
            sample_rate_hz: self.sample_rate_hz,
            t0_ms: self.time_ms(lo),
            values: self.values[lo..hi].to_vec(),
        }
    }
}

pub(crate) fn mean<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(v.len())
}

/// Population variance.
pub(crate) fn variance<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let m = mean(v);
    v.iter().fold(T::zero(), |a, &b| a + (b - m) * (b - m)) / T::from_usize_lossy(v.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand<T> {
    pub low_hz: T,
    pub high_hz: T,
}

impl<T: Real> FrequencyBand<T> {
    pub fn new(low_hz: f64, high_hz: f64) -> Self {
        FrequencyBand { low_hz: T::lit(low_hz), high_hz: T::lit(high_hz) }
    }

    pub fn contains(&self, f: T) -> bool {
        f >= self.low_hz && f <= self.high_hz
    }
}

/// Tunables of the vitals and occupancy pipelines.
///
/// `resp_freq_hz` (0.8 Hz) sits above `resp_band_hz` (0-0.5 Hz). Both are
/// kept as given and never reconciled against each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig<T> {
    pub heart_freq_hz: T,
    pub resp_freq_hz: T,
    pub heart_band_hz: FrequencyBand<T>,
    pub resp_band_hz: FrequencyBand<T>,
    pub peak_percentile: T,
    pub rate_window_s: T,
    pub occupancy_debounce_s: T,
    pub morlet_omega0: T,
    /// Refractory distance between heart peaks (0.25 s caps at 240 bpm).
    pub heart_min_separation_s: T,
    /// Refractory distance between breath peaks (1.5 s caps at 40 /min).
    pub resp_min_separation_s: T,
    /// Recompute peak thresholds from the trailing trace every second.
    pub rolling_recalibration: bool,
}

impl<T: Real> Default for AnalysisConfig<T> {
    fn default() -> Self {
        AnalysisConfig {
            heart_freq_hz: T::lit(3.5),
            resp_freq_hz: T::lit(0.8),
            heart_band_hz: FrequencyBand::new(1.0, 25.0),
            resp_band_hz: FrequencyBand::new(0.0, 0.5),
            peak_percentile: T::lit(5.0),
            rate_window_s: T::lit(60.0),
            occupancy_debounce_s: T::lit(2.0),
            morlet_omega0: T::lit(6.0),
            heart_min_separation_s: T::lit(0.25),
            resp_min_separation_s: T::lit(1.5),
            rolling_recalibration: false,
        }
    }
}

impl<T: Real> AnalysisConfig<T> {
    pub fn validate(&self) -> Result<(), TypesError> {
        let bad = |m: &str| Err(TypesError::InvalidConfig(m.to_string()));
        if !self.heart_band_hz.contains(self.heart_freq_hz) {
            return bad("heart_freq_hz must lie within heart_band_hz");
        }
        if !(self.resp_freq_hz > T::zero()) {
            return bad("resp_freq_hz must be positive");
        }
        if !(self.peak_percentile > T::zero() && self.peak_percentile < T::lit(100.0)) {
            return bad("peak_percentile must be in (0, 100)");
        }
        if !(self.rate_window_s > T::zero()) {
            return bad("rate_window_s must be positive");
        }
        if !(self.occupancy_debounce_s >= T::zero()) {
            return bad("occupancy_debounce_s must be non-negative");
        }
        if !(self.morlet_omega0 >= T::lit(5.0)) {
            return bad("morlet_omega0 must be at least 5");
        }
        if !(self.heart_min_separation_s > T::zero() && self.resp_min_separation_s > T::zero()) {
            return bad("minimum peak separations must be positive");
        }
        Ok(())
    }
}
