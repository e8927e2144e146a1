//! Synthetic BCG recordings with known ground truth.
//!
//! The mechanical signal seen by both accelerometers is
//!
//! * a tilt step while the furniture is occupied (raised-cosine ramps),
//! * one Gaussian-windowed tone per heartbeat at `heart_pulse_carrier_hz`,
//! * one Gaussian-windowed tone per breath at `resp_pulse_carrier_hz`
//!   (or a plain sinusoid at the breathing rate with [`RespirationModel::Sinusoid`]),
//!
//! scaled per axis, plus independent white noise per channel with
//! `sigma = density * sqrt(fs / 2)` taken from the sensor's datasheet density.
//! Beat and breath intervals carry multiplicative Gaussian jitter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{SamplePacket, Sca10hFrame};
use crate::scalar::Real;
use crate::types::{mg_to_raw, AccelSeries, Axis, SensorChannel, SensorKind, SAMPLES_PER_PACKET, SAMPLE_RATE_HZ};
use crate::vitals::{HEART_RATE_RANGE_BPM, RESP_RATE_RANGE_BPM};

/// Static acceleration on the vertical axis.
pub const GRAVITY_MG: f64 = 1000.0;

/// Per-axis gains of the tilt step and of the vibration components.
fn axis_gains(axis: Axis) -> (f64, f64) {
    match axis {
        Axis::X => (1.0, 1.0),
        Axis::Y => (0.35, 0.6),
        Axis::Z => (0.0, 0.4),
    }
}

/// Pulses are rendered out to this many widths on each side.
const PULSE_EXTENT_SIGMAS: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis parameter: {0}")]
    InvalidParams(String),
    #[error("duration must be positive, got {0} s")]
    NonPositiveDuration(f64),
    #[error("packet generation needs a whole number of seconds, got {0}")]
    FractionalDuration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RespirationModel {
    /// One Gaussian-windowed tone per breath.
    #[default]
    WindowedTone,
    /// `resp_amp_mg * sin(2 pi rr/60 t)`; breath times are the crests.
    Sinusoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub heart_rate_bpm: f64,
    pub resp_rate_bpm: f64,
    pub heart_pulse_carrier_hz: f64,
    /// Gaussian sigma of one heartbeat pulse.
    pub heart_pulse_width_s: f64,
    pub heart_amp_mg: f64,
    pub resp_amp_mg: f64,
    pub resp_model: RespirationModel,
    pub resp_pulse_carrier_hz: f64,
    /// Gaussian sigma of one breath pulse.
    pub resp_pulse_width_s: f64,
    pub tilt_step_mg: f64,
    pub tilt_ramp_s: f64,
    /// Overrides the datasheet noise density of every sensor when set.
    pub noise_density_ug_per_rthz: Option<f64>,
    pub hr_jitter_pct: f64,
    pub rr_jitter_pct: f64,
    /// Occupied `[start, end)` intervals in seconds; `None` means always occupied.
    pub occupied_intervals_s: Option<Vec<(f64, f64)>>,
    /// Timestamp of the first sample.
    pub start_ms: u64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            heart_rate_bpm: 70.0,
            resp_rate_bpm: 15.0,
            heart_pulse_carrier_hz: 3.5,
            heart_pulse_width_s: 0.15,
            heart_amp_mg: 2.0,
            resp_amp_mg: 0.5,
            resp_model: RespirationModel::WindowedTone,
            resp_pulse_carrier_hz: 0.8,
            resp_pulse_width_s: 0.8,
            tilt_step_mg: 50.0,
            tilt_ramp_s: 0.5,
            noise_density_ug_per_rthz: None,
            hr_jitter_pct: 3.0,
            rr_jitter_pct: 3.0,
            occupied_intervals_s: None,
            start_ms: 0,
            seed: 0,
        }
    }
}

impl SynthParams {
    /// Noise-free, jitter-free variant of these parameters.
    pub fn noiseless(mut self) -> Self {
        self.noise_density_ug_per_rthz = Some(0.0);
        self.hr_jitter_pct = 0.0;
        self.rr_jitter_pct = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !in_range(self.heart_rate_bpm, HEART_RATE_RANGE_BPM) {
            return bad(format!("heart_rate_bpm {} outside {:?}", self.heart_rate_bpm, HEART_RATE_RANGE_BPM));
        }
        if !in_range(self.resp_rate_bpm, RESP_RATE_RANGE_BPM) {
            return bad(format!("resp_rate_bpm {} outside {:?}", self.resp_rate_bpm, RESP_RATE_RANGE_BPM));
        }
        let non_negative = [
            ("heart_amp_mg", self.heart_amp_mg),
            ("resp_amp_mg", self.resp_amp_mg),
            ("tilt_step_mg", self.tilt_step_mg),
            ("tilt_ramp_s", self.tilt_ramp_s),
            ("noise_density_ug_per_rthz", self.noise_density_ug_per_rthz.unwrap_or(0.0)),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        for (name, v) in [("hr_jitter_pct", self.hr_jitter_pct), ("rr_jitter_pct", self.rr_jitter_pct)] {
            if !(0.0..50.0).contains(&v) {
                return bad(format!("{name} must be in [0, 50)"));
            }
        }
        for (name, v) in
            [("heart_pulse_width_s", self.heart_pulse_width_s), ("resp_pulse_width_s", self.resp_pulse_width_s)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive"));
            }
        }
        let nyquist = SAMPLE_RATE_HZ / 2.0;
        for (name, v) in [
            ("heart_pulse_carrier_hz", self.heart_pulse_carrier_hz),
            ("resp_pulse_carrier_hz", self.resp_pulse_carrier_hz),
        ] {
            if !(v > 0.0 && v < nyquist) {
                return bad(format!("{name} must be in (0, {nyquist})"));
            }
        }
        if let Some(iv) = &self.occupied_intervals_s {
            let mut prev_end = 0.0;
            for &(a, b) in iv {
                if !(a >= prev_end && b > a) {
                    return bad("occupied intervals must be sorted, disjoint and non-empty".into());
                }
                prev_end = b;
            }
        }
        Ok(())
    }

    fn noise_sigma_mg(&self, sensor: SensorKind) -> f64 {
        let density = self.noise_density_ug_per_rthz.unwrap_or(sensor.spec().noise_density_ug_per_rthz);
        density * 1e-3 * (SAMPLE_RATE_HZ / 2.0).sqrt()
    }
}

/// What the generator actually put into the signal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beat_times_s: Vec<f64>,
    pub breath_times_s: Vec<f64>,
    pub occupied_intervals_s: Vec<(f64, f64)>,
}

impl GroundTruth {
    pub fn is_occupied(&self, t_s: f64) -> bool {
        self.occupied_intervals_s.iter().any(|&(a, b)| t_s >= a && t_s < b)
    }
}

/// Every channel of a generated recording plus its ground truth.
#[derive(Debug, Clone)]
pub struct SynthRecording<T> {
    /// In [`SensorChannel::ALL`] order.
    pub channels: Vec<AccelSeries<T>>,
    pub truth: GroundTruth,
}

impl<T: Real> SynthRecording<T> {
    pub fn channel(&self, channel: SensorChannel) -> &AccelSeries<T> {
        self.channels.iter().find(|s| s.channel == channel).expect("every channel is generated")
    }
}

fn event_times(intervals: &[(f64, f64)], rate_per_min: f64, jitter_pct: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nominal = 60.0 / rate_per_min;
    let jitter = jitter_pct / 100.0;
    let mut times = Vec::new();
    for &(a, b) in intervals {
        let mut t = a + nominal / 2.0;
        while t < b {
            times.push(t);
            let z: f64 = StandardNormal.sample(rng);
            t += nominal * (1.0 + jitter * z).max(0.5);
        }
    }
    times
}

fn add_windowed_tone(signal: &mut [f64], fs: f64, center_s: f64, sigma_s: f64, carrier_hz: f64, amp: f64) {
    if amp == 0.0 {
        return;
    }
    let extent = PULSE_EXTENT_SIGMAS * sigma_s;
    let lo = ((center_s - extent) * fs).floor().max(0.0) as usize;
    let hi = (((center_s + extent) * fs).ceil().max(0.0) as usize).min(signal.len());
    for (i, v) in signal.iter_mut().enumerate().take(hi).skip(lo) {
        let dt = i as f64 / fs - center_s;
        *v += amp * (-(dt * dt) / (2.0 * sigma_s * sigma_s)).exp() * (std::f64::consts::TAU * carrier_hz * dt).cos();
    }
}

/// 0..1 occupancy envelope with raised-cosine ramps starting at each edge.
fn occupancy_envelope(t: f64, intervals: &[(f64, f64)], ramp_s: f64) -> f64 {
    let rise = |x: f64| {
        if ramp_s <= 0.0 {
            return if x >= 0.0 { 1.0 } else { 0.0 };
        }
        let u = (x / ramp_s).clamp(0.0, 1.0);
        0.5 - 0.5 * (std::f64::consts::PI * u).cos()
    };
    intervals.iter().map(|&(a, b)| rise(t - a) - rise(t - b)).fold(0.0, f64::max)
}

/// Generates every channel for `duration_s` seconds.
pub fn generate_bcg<T: Real>(params: &SynthParams, duration_s: f64) -> Result<SynthRecording<T>, SynthError> {
    params.validate()?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(SynthError::NonPositiveDuration(duration_s));
    }
    let fs = SAMPLE_RATE_HZ;
    let n = (duration_s * fs).round() as usize;
    let intervals: Vec<(f64, f64)> = match &params.occupied_intervals_s {
        None => vec![(0.0, duration_s)],
        Some(iv) => iv.iter().filter(|(a, _)| *a < duration_s).map(|&(a, b)| (a, b.min(duration_s))).collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let beats = event_times(&intervals, params.heart_rate_bpm, params.hr_jitter_pct, &mut rng);

    let mut vibration = vec![0.0; n];
    for &tb in &beats {
        add_windowed_tone(
            &mut vibration,
            fs,
            tb,
            params.heart_pulse_width_s,
            params.heart_pulse_carrier_hz,
            params.heart_amp_mg,
        );
    }

    let breaths = match params.resp_model {
        RespirationModel::WindowedTone => {
            let breaths = event_times(&intervals, params.resp_rate_bpm, params.rr_jitter_pct, &mut rng);
            for &tb in &breaths {
                add_windowed_tone(
                    &mut vibration,
                    fs,
                    tb,
                    params.resp_pulse_width_s,
                    params.resp_pulse_carrier_hz,
                    params.resp_amp_mg,
                );
            }
            breaths
        }
        RespirationModel::Sinusoid => {
            let f = params.resp_rate_bpm / 60.0;
            for (i, v) in vibration.iter_mut().enumerate() {
                let t = i as f64 / fs;
                if let Some(&(a, _)) = intervals.iter().find(|&&(a, b)| t >= a && t < b) {
                    *v += params.resp_amp_mg * (std::f64::consts::TAU * f * (t - a)).sin();
                }
            }
            let period = 1.0 / f;
            intervals
                .iter()
                .flat_map(|&(a, b)| {
                    (0..).map(move |k| a + period / 4.0 + k as f64 * period).take_while(move |&t| t < b)
                })
                .collect()
        }
    };

    let tilt: Vec<f64> = (0..n)
        .map(|i| params.tilt_step_mg * occupancy_envelope(i as f64 / fs, &intervals, params.tilt_ramp_s))
        .collect();

    let channels = SensorChannel::ALL
        .iter()
        .map(|&ch| {
            let (tilt_gain, vib_gain) = axis_gains(ch.axis());
            let offset = if ch.axis() == Axis::Z { GRAVITY_MG } else { 0.0 };
            let sigma = params.noise_sigma_mg(ch.sensor());
            let values = (0..n)
                .map(|i| {
                    let noise = if sigma > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sigma * z
                    } else {
                        0.0
                    };
                    T::lit(offset + tilt_gain * tilt[i] + vib_gain * vibration[i] + noise)
                })
                .collect();
            AccelSeries::new(ch, params.start_ms as i64, values)
        })
        .collect();

    Ok(SynthRecording {
        channels,
        truth: GroundTruth { beat_times_s: beats, breath_times_s: breaths, occupied_intervals_s: intervals },
    })
}

/// Quantizes a generated recording into one packet per second. The reference
/// frame carries the ground-truth rates and occupancy.
pub fn generate_packets(params: &SynthParams, duration_s: f64) -> Result<Vec<SamplePacket>, SynthError> {
    if !(duration_s > 0.0) {
        return Err(SynthError::NonPositiveDuration(duration_s));
    }
    if duration_s.fract() != 0.0 {
        return Err(SynthError::FractionalDuration(duration_s));
    }
    let rec = generate_bcg::<f64>(params, duration_s)?;
    Ok(packetize(params, &rec))
}

/// Packets for an already generated recording.
pub fn packetize(params: &SynthParams, rec: &SynthRecording<f64>) -> Vec<SamplePacket> {
    let seconds = rec.channels[0].len() / SAMPLES_PER_PACKET;
    let raw = |ch: SensorChannel, i: usize| -> i16 {
        let v = rec.channel(ch).values[i];
        // Both specs fit in 16 bits after saturation.
        mg_to_raw(v, ch.spec()) as i16
    };
    let heart = params.heart_rate_bpm.round() as u16;
    let resp = params.resp_rate_bpm.round() as u16;
    let b2b = (60_000.0 / params.heart_rate_bpm).round() as u16;
    (0..seconds)
        .map(|k| {
            let base = k * SAMPLES_PER_PACKET;
            let occupied = rec.truth.is_occupied(k as f64 + 0.5);
            let frame = Sca10hFrame {
                seq: k as u32,
                timestamp_ms: params.start_ms + 1000 * k as u64,
                heart_rate_bpm: if occupied { heart } else { 0 },
                respiration_rate_bpm: if occupied { resp } else { 0 },
                occupied,
                status: 0,
                signal_strength: if occupied { 1000 } else { 0 },
                b2b_time_ms: if occupied { [b2b; 3] } else { [0; 3] },
                hrv_ms: 0,
                stroke_volume: 0,
            };
            let sca61t = std::array::from_fn(|i| {
                [raw(SensorChannel::SCA61T_X, base + i), raw(SensorChannel::SCA61T_Y, base + i)]
            });
            let lis3dhh = std::array::from_fn(|i| {
                [
                    raw(SensorChannel::LIS3DHH_X, base + i),
                    raw(SensorChannel::LIS3DHH_Y, base + i),
                    raw(SensorChannel::LIS3DHH_Z, base + i),
                ]
            });
            SamplePacket::new(frame, sca61t, lis3dhh).expect("mg_to_raw saturates to the sensor range")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{raw_to_mg, LIS3DHH, SCA61T};

    #[test]
    fn noiseless_heart_60_beats_one_second_apart() {
        let p = SynthParams { heart_rate_bpm: 60.0, ..SynthParams::default() }.noiseless();
        let rec = generate_bcg::<f64>(&p, 20.0).unwrap();
        let d: Vec<f64> = rec.truth.beat_times_s.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn autocorrelation_peaks_at_beat_period() {
        let p = SynthParams { heart_rate_bpm: 60.0, resp_amp_mg: 0.0, tilt_step_mg: 0.0, ..SynthParams::default() }
            .noiseless();
        let rec = generate_bcg::<f64>(&p, 30.0).unwrap();
        let x = &rec.channel(SensorChannel::LIS3DHH_X).values;
        let ac = |lag: usize| (0..x.len() - lag).map(|i| x[i] * x[i + lag]).sum::<f64>();
        // Search lags 0.5..1.5 s.
        let best = (50..150).max_by(|&a, &b| ac(a).partial_cmp(&ac(b)).unwrap()).unwrap();
        assert_eq!(best, 100);
    }

    #[test]
    fn lis3dhh_noise_sigma() {
        let sigma = LIS3DHH.noise_sigma_mg(100.0);
        assert!((sigma - 0.318).abs() < 1e-3);
        assert!((SynthParams::default().noise_sigma_mg(SensorKind::Lis3dhh) - sigma).abs() < 1e-12);
        assert!(
            (SynthParams::default().noise_sigma_mg(SensorKind::Sca61t) - SCA61T.noise_sigma_mg(100.0)).abs() < 1e-12
        );
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = [
            SynthParams { heart_rate_bpm: 300.0, ..Default::default() },
            SynthParams { resp_rate_bpm: 1.0, ..Default::default() },
            SynthParams { heart_amp_mg: -1.0, ..Default::default() },
            SynthParams { heart_pulse_width_s: 0.0, ..Default::default() },
            SynthParams { heart_pulse_carrier_hz: 60.0, ..Default::default() },
            SynthParams { occupied_intervals_s: Some(vec![(5.0, 2.0)]), ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(generate_bcg::<f64>(&p, 10.0), Err(SynthError::InvalidParams(_))), "{p:?}");
        }
        assert!(generate_bcg::<f64>(&SynthParams::default(), 0.0).is_err());
    }

    #[test]
    fn packets_are_counted_and_sequenced() {
        let packets = generate_packets(&SynthParams::default(), 10.0).unwrap();
        assert_eq!(packets.len(), 10);
        for (k, p) in packets.iter().enumerate() {
            assert_eq!(p.sca10h().seq, k as u32);
            assert_eq!(p.sca10h().timestamp_ms, 1000 * k as u64);
            assert_eq!(p.sca10h().heart_rate_bpm, 70);
            assert!(p.sca10h().occupied);
        }
        assert!(matches!(generate_packets(&SynthParams::default(), 2.5), Err(SynthError::FractionalDuration(_))));
    }

    #[test]
    fn quantization_error_is_half_an_lsb() {
        let p = SynthParams::default();
        let rec = generate_bcg::<f64>(&p, 5.0).unwrap();
        let packets = packetize(&p, &rec);
        for ch in SensorChannel::ALL {
            let spec = ch.spec();
            for (k, pkt) in packets.iter().enumerate() {
                for (i, &r) in pkt.channel_raw(ch).iter().enumerate() {
                    let back: f64 = raw_to_mg(i32::from(r), spec).unwrap();
                    let orig = rec.channel(ch).values[k * 100 + i];
                    assert!((back - orig).abs() <= 0.5 * spec.sensitivity_mg_per_lsb + 1e-9, "{ch}");
                }
            }
        }
    }

    #[test]
    fn empty_seconds_carry_no_reference_vitals() {
        let p = SynthParams { occupied_intervals_s: Some(vec![(3.0, 100.0)]), ..Default::default() };
        let packets = generate_packets(&p, 6.0).unwrap();
        assert!(!packets[1].sca10h().occupied);
        assert_eq!(packets[1].sca10h().heart_rate_bpm, 0);
        assert!(packets[4].sca10h().occupied);
        let rec = generate_bcg::<f64>(&p, 6.0).unwrap();
        assert!(rec.truth.beat_times_s.iter().all(|&t| t >= 3.0));
        let x = &rec.channel(SensorChannel::LIS3DHH_X).values;
        assert!(x[100].abs() < 2.0);
        assert!(x[500] > 40.0);
    }

    #[test]
    fn sinusoid_breaths_are_crests() {
        let p = SynthParams { resp_model: RespirationModel::Sinusoid, resp_rate_bpm: 12.0, ..Default::default() };
        let rec = generate_bcg::<f64>(&p, 20.0).unwrap();
        assert_eq!(rec.truth.breath_times_s, vec![1.25, 6.25, 11.25, 16.25]);
    }

    #[test]
    fn seed_changes_noise() {
        let a = generate_bcg::<f64>(&SynthParams { seed: 1, ..Default::default() }, 2.0).unwrap();
        let b = generate_bcg::<f64>(&SynthParams { seed: 2, ..Default::default() }, 2.0).unwrap();
        assert_ne!(a.channels[0].values, b.channels[0].values);
    }
}
