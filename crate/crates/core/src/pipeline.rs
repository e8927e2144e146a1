//! Per-stream processing shared by the server and offline analysis: occupancy
//! gating followed by vitals estimation, one record per second.
//!
//! The vitals estimator only runs while the detector reports the furniture as
//! occupied and restarts from scratch on every empty → occupied transition, so
//! trailing windows never mix in signal from before the person arrived.

use std::io::Read;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{SamplePacket, Sca10hFrame};
use crate::cwt::{CwtError, MorletParams, StreamingCwt};
use crate::occupancy::{OccupancyConfig, OccupancyDetector, OccupancyError, OccupancyTransition};
use crate::scalar::Real;
use crate::types::{AccelSeries, AnalysisConfig, SensorChannel};
use crate::vitals::{calibrate_threshold, BandThresholds, VitalsError, VitalsEstimator};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input has no samples for channel {0}")]
    MissingChannel(SensorChannel),
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error(transparent)]
    Vitals(#[from] VitalsError),
    #[error("malformed calibration file: {0}")]
    CalibrationFile(#[from] serde_json::Error),
}

fn default_vitals_channel() -> SensorChannel {
    SensorChannel::LIS3DHH_X
}

/// Everything a stream needs to run calibrated: one JSON object per sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SensorCalibration<T> {
    pub sensor_id: String,
    pub occupancy: OccupancyConfig<T>,
    pub peak_thresholds: BandThresholds<T>,
    /// Channel whose CWT traces feed the vitals estimator.
    #[serde(default = "default_vitals_channel")]
    pub vitals_channel: SensorChannel,
}

/// Reads a calibration file: any number of concatenated or
/// whitespace-separated JSON objects.
pub fn read_calibrations<T, R>(reader: R) -> Result<Vec<SensorCalibration<T>>, PipelineError>
where
    T: Real + for<'de> Deserialize<'de>,
    R: Read,
{
    serde_json::Deserializer::from_reader(reader)
        .into_iter::<SensorCalibration<T>>()
        .map(|r| r.map_err(PipelineError::from))
        .collect()
}

/// Calibrates both peak thresholds from one calibration measurement.
///
/// The traces come from the streaming transform, i.e. exactly the values the
/// estimator later compares against the thresholds (the FFT route differs in
/// the last bits, enough to create spurious maxima on flat traces).
pub fn calibrate_peaks<T: Real>(
    signal: &AccelSeries<T>,
    config: &AnalysisConfig<T>,
) -> Result<BandThresholds<T>, VitalsError> {
    config.validate()?;
    let params = MorletParams::new(config.morlet_omega0)?;
    let trace = |f_hz: T| -> Result<Vec<T>, CwtError> {
        let mut cwt = StreamingCwt::new(f_hz, signal.sample_rate_hz(), &params)?;
        let mut out = Vec::with_capacity(signal.len());
        cwt.push(&signal.values, &mut out);
        Ok(out)
    };
    let heart = trace(config.heart_freq_hz)?;
    let resp = trace(config.resp_freq_hz)?;
    Ok(BandThresholds {
        heart: calibrate_threshold(&heart, config.peak_percentile)?,
        resp: calibrate_threshold(&resp, config.peak_percentile)?,
    })
}

/// Full calibration from an empty and an occupied recording (any channels;
/// the occupancy axis is picked among the ground-parallel ones).
///
/// Peak thresholds come from `peak_signal` if given, otherwise from the
/// `vitals_channel` of the empty recording followed by the occupied one: the
/// empty stretch supplies noise-floor maxima, the occupied one real peaks.
pub fn calibrate_sensor<T: Real>(
    sensor_id: &str,
    empty: &[AccelSeries<T>],
    occupied: &[AccelSeries<T>],
    peak_signal: Option<&AccelSeries<T>>,
    vitals_channel: SensorChannel,
    config: &AnalysisConfig<T>,
) -> Result<SensorCalibration<T>, PipelineError> {
    let occupancy = crate::occupancy::calibrate_occupancy_best_axis(empty, occupied)?;
    let joined;
    let signal = match peak_signal {
        Some(s) => s,
        None => {
            let missing = PipelineError::MissingChannel(vitals_channel);
            let e = empty.iter().find(|s| s.channel == vitals_channel).ok_or(missing)?;
            let o = occupied.iter().find(|s| s.channel == vitals_channel);
            let o = o.ok_or(PipelineError::MissingChannel(vitals_channel))?;
            let mut j = e.clone();
            j.values.extend_from_slice(&o.values);
            joined = j;
            &joined
        }
    };
    let peak_thresholds = calibrate_peaks(signal, config)?;
    info!(
        "{sensor_id}: occupancy on {} (threshold {:.3} mg), peak thresholds heart {:.4} resp {:.4}",
        occupancy.axis,
        occupancy.threshold_mg.to_f64_lossy(),
        peak_thresholds.heart.value().to_f64_lossy(),
        peak_thresholds.resp.value().to_f64_lossy()
    );
    Ok(SensorCalibration { sensor_id: sensor_id.to_string(), occupancy, peak_thresholds, vitals_channel })
}

impl From<CwtError> for PipelineError {
    fn from(e: CwtError) -> Self {
        PipelineError::Vitals(e.into())
    }
}

/// One second of output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondRecord<T> {
    pub seq: u32,
    /// Timestamp of the first sample of the second, as carried by the input.
    pub frame_t_ms: i64,
    pub occupied: bool,
    pub heart_bpm: Option<T>,
    pub resp_bpm: Option<T>,
    /// Less than one rate window of occupied signal behind the estimates.
    pub provisional: bool,
    pub sca10h_heart_bpm: Option<u16>,
    pub sca10h_resp_bpm: Option<u16>,
    pub sca10h_occupied: Option<bool>,
    pub uncalibrated: bool,
}

struct Calibrated<T> {
    calibration: SensorCalibration<T>,
    detector: Option<OccupancyDetector<T>>,
    estimator: Option<VitalsEstimator<T>>,
}

/// Occupancy + vitals for a single sensor stream.
pub struct StreamPipeline<T> {
    config: AnalysisConfig<T>,
    sample_rate_hz: T,
    calibrated: Option<Calibrated<T>>,
    transitions: Vec<OccupancyTransition<T>>,
}

impl<T: Real> StreamPipeline<T> {
    /// Without a calibration the pipeline passes the reference frame's
    /// occupancy through and never estimates vitals.
    pub fn new(
        config: AnalysisConfig<T>,
        calibration: Option<SensorCalibration<T>>,
        sample_rate_hz: T,
    ) -> Result<Self, PipelineError> {
        config.validate().map_err(VitalsError::from)?;
        let calibrated = match calibration {
            Some(c) => {
                c.occupancy.validate()?;
                // Fail early on thresholds or config the estimator rejects.
                VitalsEstimator::new(&config, &c.peak_thresholds, sample_rate_hz)?;
                Some(Calibrated { calibration: c, detector: None, estimator: None })
            }
            None => None,
        };
        Ok(StreamPipeline { config, sample_rate_hz, calibrated, transitions: Vec::new() })
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated.is_some()
    }

    /// Occupancy transitions since the last call.
    pub fn drain_transitions(&mut self) -> Vec<OccupancyTransition<T>> {
        std::mem::take(&mut self.transitions)
    }

    pub fn process_packet(&mut self, packet: &SamplePacket) -> Result<SecondRecord<T>, PipelineError> {
        let frame = packet.sca10h();
        self.process_second(frame.seq, frame.timestamp_ms as i64, |ch| Some(packet.channel_mg(ch)), Some(frame))
    }

    /// Processes one second of samples; `samples` looks channels up.
    pub fn process_second<F>(
        &mut self,
        seq: u32,
        t0_ms: i64,
        samples: F,
        frame: Option<&Sca10hFrame>,
    ) -> Result<SecondRecord<T>, PipelineError>
    where
        F: Fn(SensorChannel) -> Option<Vec<T>>,
    {
        let mut record = SecondRecord {
            seq,
            frame_t_ms: t0_ms,
            occupied: frame.is_some_and(|f| f.occupied),
            heart_bpm: None,
            resp_bpm: None,
            provisional: false,
            sca10h_heart_bpm: frame.map(|f| f.heart_rate_bpm),
            sca10h_resp_bpm: frame.map(|f| f.respiration_rate_bpm),
            sca10h_occupied: frame.map(|f| f.occupied),
            uncalibrated: self.calibrated.is_none(),
        };
        let Some(cal) = self.calibrated.as_mut() else {
            return Ok(record);
        };

        let occ_channel = cal.calibration.occupancy.axis;
        let occ_samples = samples(occ_channel).ok_or(PipelineError::MissingChannel(occ_channel))?;
        let detector = match cal.detector.as_mut() {
            Some(d) => d,
            None => cal.detector.insert(OccupancyDetector::new(cal.calibration.occupancy, t0_ms)?),
        };
        let period_ms = 1000.0 / self.sample_rate_hz.to_f64_lossy();
        for tr in detector.update_block(&occ_samples, t0_ms, period_ms) {
            info!("occupancy -> {} at {} ms (level {} mg)", tr.occupied, tr.t_ms, tr.level_mg);
            self.transitions.push(tr);
        }
        record.occupied = detector.state().occupied;

        if !record.occupied {
            cal.estimator = None;
            return Ok(record);
        }
        let vch = cal.calibration.vitals_channel;
        let vitals_samples = samples(vch).ok_or(PipelineError::MissingChannel(vch))?;
        let estimator = match cal.estimator.as_mut() {
            Some(e) => e,
            None => {
                debug!("starting vitals estimator at seq {seq}");
                cal.estimator.insert(VitalsEstimator::new(
                    &self.config,
                    &cal.calibration.peak_thresholds,
                    self.sample_rate_hz,
                )?)
            }
        };
        let est = estimator.push_and_estimate(&vitals_samples);
        record.heart_bpm = est.heart_rate_bpm;
        record.resp_bpm = est.respiration_rate_bpm;
        record.provisional = est.provisional;
        Ok(record)
    }
}
