//! Heart and respiration rate estimation from CWT magnitude traces.
//!
//! Each band runs the same chain: |CWT| at one analysis frequency, strict
//! local maxima above a calibrated threshold, a refractory rule that keeps the
//! larger of two maxima closer than the minimum separation, and finally
//! `rate = 60 / mean(peak-to-peak interval)` over the trailing window.

use std::collections::BTreeSet;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwt::{CwtError, MorletParams, StreamingCwt};
use crate::scalar::Real;
use crate::types::{AccelSeries, AnalysisConfig, TypesError};

/// Calibration needs at least this many local maxima.
pub const MIN_CALIBRATION_PEAKS: usize = 20;

pub const HEART_RATE_RANGE_BPM: (f64, f64) = (20.0, 250.0);
pub const RESP_RATE_RANGE_BPM: (f64, f64) = (2.0, 60.0);

/// Extra trace history kept beyond the rate window so that peaks at the window
/// edge see their neighbours.
const TRACE_MARGIN_S: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VitalsError {
    #[error("calibration trace has {count} local maxima, need at least {MIN_CALIBRATION_PEAKS}")]
    InsufficientPeaks { count: usize },
    #[error("percentile must be in (0, 100), got {0}")]
    InvalidPercentile(f64),
    #[error("minimum peak separation must be positive, got {0}")]
    InvalidSeparation(f64),
    #[error("threshold must be a non-negative number, got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Cwt(#[from] CwtError),
    #[error(transparent)]
    Config(#[from] TypesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    Calibrated,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakThreshold<T> {
    value: T,
    source: ThresholdSource,
}

impl<T: Real> PeakThreshold<T> {
    pub fn manual(value: T) -> Result<Self, VitalsError> {
        Self::with_source(value, ThresholdSource::Manual)
    }

    fn with_source(value: T, source: ThresholdSource) -> Result<Self, VitalsError> {
        if !(value >= T::zero()) || !value.is_finite() {
            return Err(VitalsError::InvalidThreshold(value.to_f64_lossy()));
        }
        Ok(PeakThreshold { value, source })
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn source(&self) -> ThresholdSource {
        self.source
    }
}

/// Per-band thresholds, as stored in calibration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds<T> {
    pub heart: PeakThreshold<T>,
    pub resp: PeakThreshold<T>,
}

/// Detected peaks of one magnitude trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTrain<T> {
    /// Strictly increasing.
    pub peak_times_s: Vec<T>,
    pub peak_amplitudes: Vec<T>,
    /// Time of the last analysed trace sample; the trailing window ends here.
    pub window_end_s: T,
}

impl<T: Real> PeakTrain<T> {
    pub fn from_times(peak_times_s: Vec<T>, window_end_s: T) -> Self {
        let peak_amplitudes = vec![T::one(); peak_times_s.len()];
        PeakTrain { peak_times_s, peak_amplitudes, window_end_s }
    }

    /// Intervals between consecutive peaks.
    pub fn intervals_s(&self) -> Vec<T> {
        self.peak_times_s.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Peaks inside `(window_end_s - window_s, window_end_s]`.
    pub fn in_window(&self, window_s: T) -> &[T] {
        let start = self.window_end_s - window_s;
        let lo = self.peak_times_s.partition_point(|&t| t <= start);
        let hi = self.peak_times_s.partition_point(|&t| t <= self.window_end_s);
        &self.peak_times_s[lo..hi]
    }

    /// Number of peaks in the trailing window.
    pub fn count_in_window(&self, window_s: T) -> usize {
        self.in_window(window_s).len()
    }

    pub fn shifted(mut self, offset_s: T) -> Self {
        self.peak_times_s.iter_mut().for_each(|t| *t = *t + offset_s);
        self.window_end_s = self.window_end_s + offset_s;
        self
    }
}

/// Indices of strict local maxima (`x[i-1] < x[i] > x[i+1]`). Plateaus and the
/// two end samples never qualify.
pub fn local_maxima<T: Real>(trace: &[T]) -> Vec<usize> {
    if trace.len() < 3 {
        return Vec::new();
    }
    (1..trace.len() - 1).filter(|&i| trace[i] > trace[i - 1] && trace[i] > trace[i + 1]).collect()
}

/// Percentile with linear interpolation between order statistics
/// (rank `p/100 * (n-1)`).
pub fn percentile<T: Real>(values: &[T], p: T) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = p / T::lit(100.0) * T::from_usize_lossy(sorted.len() - 1);
    let lo = rank.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - T::from_usize_lossy(lo);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Threshold at the given percentile of the trace's local-maximum amplitudes.
pub fn calibrate_threshold<T: Real>(trace: &[T], percentile_p: T) -> Result<PeakThreshold<T>, VitalsError> {
    if !(percentile_p > T::zero() && percentile_p < T::lit(100.0)) {
        return Err(VitalsError::InvalidPercentile(percentile_p.to_f64_lossy()));
    }
    let amplitudes: Vec<T> = local_maxima(trace).into_iter().map(|i| trace[i]).collect();
    if amplitudes.len() < MIN_CALIBRATION_PEAKS {
        return Err(VitalsError::InsufficientPeaks { count: amplitudes.len() });
    }
    let value = percentile(&amplitudes, percentile_p).expect("non-empty");
    PeakThreshold::with_source(value, ThresholdSource::Calibrated)
}

/// Strict local maxima above `threshold`, thinned so that no two kept peaks
/// are closer than `min_separation_s`. Conflicts are resolved in favour of the
/// larger peak, then the earlier one. Times are relative to `trace[0]`.
pub fn detect_peaks<T: Real>(
    trace: &[T],
    sample_rate_hz: T,
    threshold: &PeakThreshold<T>,
    min_separation_s: T,
) -> Result<PeakTrain<T>, VitalsError> {
    if !(min_separation_s > T::zero()) {
        return Err(VitalsError::InvalidSeparation(min_separation_s.to_f64_lossy()));
    }
    let window_end_s = if trace.is_empty() { T::zero() } else { T::from_usize_lossy(trace.len() - 1) / sample_rate_hz };

    let mut candidates: Vec<usize> = local_maxima(trace).into_iter().filter(|&i| trace[i] > threshold.value).collect();
    candidates.sort_by(|&a, &b| trace[b].partial_cmp(&trace[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));

    let too_close = |a: usize, b: usize| T::from_usize_lossy(a.abs_diff(b)) / sample_rate_hz < min_separation_s;
    let mut kept = BTreeSet::new();
    for i in candidates {
        let before = kept.range(..i).next_back().copied();
        let after = kept.range(i..).next().copied();
        if before.is_some_and(|j| too_close(i, j)) || after.is_some_and(|j| too_close(i, j)) {
            continue;
        }
        kept.insert(i);
    }

    let peak_times_s = kept.iter().map(|&i| T::from_usize_lossy(i) / sample_rate_hz).collect();
    let peak_amplitudes = kept.iter().map(|&i| trace[i]).collect();
    Ok(PeakTrain { peak_times_s, peak_amplitudes, window_end_s })
}

/// Events per minute from the peaks in the trailing window:
/// `60 / mean(t_i)` with `t_i` the intervals between consecutive peaks.
/// Absent with fewer than two peaks.
pub fn rate_from_peaks<T: Real>(train: &PeakTrain<T>, window_s: T) -> Option<T> {
    let peaks = train.in_window(window_s);
    if peaks.len() < 2 {
        return None;
    }
    let intervals = T::from_usize_lossy(peaks.len() - 1);
    let mean_interval = (peaks[peaks.len() - 1] - peaks[0]) / intervals;
    (mean_interval > T::zero()).then(|| T::lit(60.0) / mean_interval)
}

/// One per-second output of the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VitalsEstimate<T> {
    /// Seconds since the first sample fed to the estimator.
    pub t_s: T,
    pub heart_rate_bpm: Option<T>,
    pub respiration_rate_bpm: Option<T>,
    /// Less than one full rate window of signal has been seen.
    pub provisional: bool,
}

fn gate<T: Real>(rate: Option<T>, range: (f64, f64), what: &str) -> Option<T> {
    let r = rate?;
    if r >= T::lit(range.0) && r <= T::lit(range.1) {
        Some(r)
    } else {
        debug!("{what} rate {r} outside [{}, {}], reporting none", range.0, range.1);
        None
    }
}

#[derive(Debug, Clone)]
struct BandTracker<T> {
    cwt: StreamingCwt<T>,
    trace: Vec<T>,
    /// Absolute sample index of `trace[0]`.
    trace_start: usize,
    retain: usize,
    threshold: PeakThreshold<T>,
    min_separation_s: T,
}

impl<T: Real> BandTracker<T> {
    fn new(
        f_hz: T,
        sample_rate_hz: T,
        params: &MorletParams<T>,
        threshold: PeakThreshold<T>,
        min_separation_s: T,
        window_s: T,
    ) -> Result<Self, VitalsError> {
        if !(min_separation_s > T::zero()) {
            return Err(VitalsError::InvalidSeparation(min_separation_s.to_f64_lossy()));
        }
        let retain = ((window_s + T::lit(TRACE_MARGIN_S)) * sample_rate_hz).ceil().to_usize().unwrap_or(usize::MAX);
        Ok(BandTracker {
            cwt: StreamingCwt::new(f_hz, sample_rate_hz, params)?,
            trace: Vec::new(),
            trace_start: 0,
            retain,
            threshold,
            min_separation_s,
        })
    }

    fn push(&mut self, samples: &[T]) {
        self.cwt.push(samples, &mut self.trace);
        // Trim in batches to keep the drain cost amortised.
        if self.trace.len() > self.retain + self.retain / 4 {
            let excess = self.trace.len() - self.retain;
            self.trace.drain(..excess);
            self.trace_start += excess;
        }
    }

    fn rate(&self, sample_rate_hz: T, window_s: T, rolling: Option<T>) -> Option<T> {
        let start = self.trace.len().saturating_sub(self.retain);
        let trace = &self.trace[start..];
        if trace.len() < 3 {
            return None;
        }
        let threshold = match rolling {
            Some(p) => calibrate_threshold(trace, p).unwrap_or(self.threshold),
            None => self.threshold,
        };
        let offset = T::from_usize_lossy(self.trace_start + start) / sample_rate_hz;
        let train = detect_peaks(trace, sample_rate_hz, &threshold, self.min_separation_s).ok()?.shifted(offset);
        rate_from_peaks(&train, window_s)
    }
}

/// Streaming per-stream estimator. Feed samples with [`push`](Self::push) and
/// read the current estimate with [`estimate`](Self::estimate) once per second.
#[derive(Debug, Clone)]
pub struct VitalsEstimator<T> {
    heart: BandTracker<T>,
    resp: BandTracker<T>,
    sample_rate_hz: T,
    window_s: T,
    rolling_percentile: Option<T>,
    received: usize,
}

impl<T: Real> VitalsEstimator<T> {
    pub fn new(
        config: &AnalysisConfig<T>,
        thresholds: &BandThresholds<T>,
        sample_rate_hz: T,
    ) -> Result<Self, VitalsError> {
        config.validate()?;
        let params = MorletParams::new(config.morlet_omega0)?;
        let heart = BandTracker::new(
            config.heart_freq_hz,
            sample_rate_hz,
            &params,
            thresholds.heart,
            config.heart_min_separation_s,
            config.rate_window_s,
        )?;
        let resp = BandTracker::new(
            config.resp_freq_hz,
            sample_rate_hz,
            &params,
            thresholds.resp,
            config.resp_min_separation_s,
            config.rate_window_s,
        )?;
        Ok(VitalsEstimator {
            heart,
            resp,
            sample_rate_hz,
            window_s: config.rate_window_s,
            rolling_percentile: config.rolling_recalibration.then_some(config.peak_percentile),
            received: 0,
        })
    }

    pub fn push(&mut self, samples: &[T]) {
        self.heart.push(samples);
        self.resp.push(samples);
        self.received += samples.len();
    }

    pub fn elapsed_s(&self) -> T {
        T::from_usize_lossy(self.received) / self.sample_rate_hz
    }

    pub fn estimate(&self) -> VitalsEstimate<T> {
        let heart = self.heart.rate(self.sample_rate_hz, self.window_s, self.rolling_percentile);
        let resp = self.resp.rate(self.sample_rate_hz, self.window_s, self.rolling_percentile);
        VitalsEstimate {
            t_s: self.elapsed_s(),
            heart_rate_bpm: gate(heart, HEART_RATE_RANGE_BPM, "heart"),
            respiration_rate_bpm: gate(resp, RESP_RATE_RANGE_BPM, "respiration"),
            provisional: self.elapsed_s() < self.window_s,
        }
    }

    /// Convenience for block-wise feeding: push, then estimate.
    pub fn push_and_estimate(&mut self, samples: &[T]) -> VitalsEstimate<T> {
        self.push(samples);
        self.estimate()
    }
}

/// Runs the streaming estimator over a whole series, one estimate per
/// complete second.
pub fn estimate_vitals<T: Real>(
    signal: &AccelSeries<T>,
    config: &AnalysisConfig<T>,
    thresholds: &BandThresholds<T>,
) -> Result<Vec<VitalsEstimate<T>>, VitalsError> {
    if signal.is_empty() {
        return Err(CwtError::EmptySignal.into());
    }
    let mut est = VitalsEstimator::new(config, thresholds, signal.sample_rate_hz())?;
    let per_second = signal.sample_rate_hz().round().to_usize().unwrap_or(1).max(1);
    Ok(signal.values.chunks_exact(per_second).map(|block| est.push_and_estimate(block)).collect())
}
