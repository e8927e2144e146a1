//! Furniture occupancy from the quasi-static tilt of a ground-parallel axis.
//!
//! Sitting or lying down tilts the frame and shifts the static acceleration
//! of the horizontal axes. The detector compares a moving mean of
//! `|a - baseline|` against a calibrated threshold and only changes state once
//! the smoothed level has stayed on the other side for `debounce_s`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::types::{mean, variance, AccelSeries, SensorChannel};

pub const MIN_CALIBRATION_SEGMENT_S: f64 = 5.0;
/// Required separation between the two levels, in pooled standard deviations.
pub const MIN_SEPARATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OccupancyError {
    #[error("calibration segment is {0:.2} s long, need at least {MIN_CALIBRATION_SEGMENT_S} s")]
    SegmentTooShort(f64),
    #[error(
        "empty and occupied levels differ by {gap:.3} mg but noise is {noise:.3} mg; \
         the setup cannot tell them apart"
    )]
    InsufficientSeparation { gap: f64, noise: f64 },
    #[error("segments come from different channels ({0} vs {1})")]
    ChannelMismatch(SensorChannel, SensorChannel),
    #[error("no ground-parallel channel available for calibration")]
    NoCandidateAxis,
    #[error("invalid occupancy config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct OccupancyConfig<T> {
    pub axis: SensorChannel,
    pub baseline_mg: T,
    pub threshold_mg: T,
    #[serde(default = "default_debounce")]
    pub debounce_s: T,
    #[serde(default = "default_smoothing")]
    pub smoothing_window_s: T,
}

fn default_debounce<T: Real>() -> T {
    T::lit(2.0)
}

fn default_smoothing<T: Real>() -> T {
    T::lit(1.0)
}

impl<T: Real> OccupancyConfig<T> {
    pub fn new(axis: SensorChannel, baseline_mg: T, threshold_mg: T) -> Result<Self, OccupancyError> {
        let cfg = OccupancyConfig {
            axis,
            baseline_mg,
            threshold_mg,
            debounce_s: default_debounce(),
            smoothing_window_s: default_smoothing(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_debounce(mut self, debounce_s: T) -> Result<Self, OccupancyError> {
        self.debounce_s = debounce_s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), OccupancyError> {
        if !(self.threshold_mg > T::zero()) {
            return Err(OccupancyError::InvalidConfig("threshold_mg must be positive"));
        }
        if !(self.debounce_s >= T::zero()) {
            return Err(OccupancyError::InvalidConfig("debounce_s must be non-negative"));
        }
        if !(self.smoothing_window_s > T::zero()) {
            return Err(OccupancyError::InvalidConfig("smoothing_window_s must be positive"));
        }
        if !self.baseline_mg.is_finite() {
            return Err(OccupancyError::InvalidConfig("baseline_mg must be finite"));
        }
        Ok(())
    }
}

/// Calibrates from one empty and one occupied recording of the same axis.
///
/// The baseline is the empty mean; the threshold sits halfway between the two
/// levels on the `|a - baseline|` scale, so tilt polarity does not matter.
pub fn calibrate_occupancy<T: Real>(
    empty: &AccelSeries<T>,
    occupied: &AccelSeries<T>,
) -> Result<OccupancyConfig<T>, OccupancyError> {
    if empty.channel != occupied.channel {
        return Err(OccupancyError::ChannelMismatch(empty.channel, occupied.channel));
    }
    for seg in [empty, occupied] {
        let d = seg.duration_s().to_f64_lossy();
        if d < MIN_CALIBRATION_SEGMENT_S {
            return Err(OccupancyError::SegmentTooShort(d));
        }
    }
    let baseline = mean(&empty.values);
    let gap = (mean(&occupied.values) - baseline).abs();
    let pooled = ((variance(&empty.values) + variance(&occupied.values)) / T::lit(2.0)).sqrt();
    if !(gap > T::zero()) || gap < T::lit(MIN_SEPARATION_SIGMAS) * pooled {
        return Err(OccupancyError::InsufficientSeparation { gap: gap.to_f64_lossy(), noise: pooled.to_f64_lossy() });
    }
    OccupancyConfig::new(empty.channel, baseline, gap / T::lit(2.0))
}

/// Calibrates every ground-parallel channel present in both recordings and
/// keeps the one with the largest level gap.
pub fn calibrate_occupancy_best_axis<T: Real>(
    empty: &[AccelSeries<T>],
    occupied: &[AccelSeries<T>],
) -> Result<OccupancyConfig<T>, OccupancyError> {
    let mut best: Option<OccupancyConfig<T>> = None;
    let mut last_err = OccupancyError::NoCandidateAxis;
    for e in empty.iter().filter(|s| s.channel.is_ground_parallel()) {
        let Some(o) = occupied.iter().find(|s| s.channel == e.channel) else {
            continue;
        };
        match calibrate_occupancy(e, o) {
            Ok(cfg) => {
                if best.map_or(true, |b| cfg.threshold_mg > b.threshold_mg) {
                    best = Some(cfg);
                }
            }
            Err(err) => last_err = err,
        }
    }
    best.ok_or(last_err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyState<T> {
    pub occupied: bool,
    /// When the current state was entered.
    pub since_ms: i64,
    /// Smoothed `|a - baseline|`.
    pub raw_level_mg: T,
}

/// A state change, as logged to the JSONL event stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTransition<T> {
    pub t_ms: i64,
    pub occupied: bool,
    pub level_mg: T,
}

/// Per-stream occupancy state machine.
#[derive(Debug, Clone)]
pub struct OccupancyDetector<T> {
    cfg: OccupancyConfig<T>,
    state: OccupancyState<T>,
    window: VecDeque<(i64, T)>,
    window_ms: f64,
    debounce_ms: f64,
    pending_since: Option<i64>,
    last_t_ms: Option<i64>,
}

impl<T: Real> OccupancyDetector<T> {
    /// Starts in the empty state.
    pub fn new(cfg: OccupancyConfig<T>, t0_ms: i64) -> Result<Self, OccupancyError> {
        cfg.validate()?;
        Ok(OccupancyDetector {
            window_ms: cfg.smoothing_window_s.to_f64_lossy() * 1000.0,
            debounce_ms: cfg.debounce_s.to_f64_lossy() * 1000.0,
            cfg,
            state: OccupancyState { occupied: false, since_ms: t0_ms, raw_level_mg: T::zero() },
            window: VecDeque::new(),
            pending_since: None,
            last_t_ms: None,
        })
    }

    pub fn config(&self) -> &OccupancyConfig<T> {
        &self.cfg
    }

    pub fn state(&self) -> &OccupancyState<T> {
        &self.state
    }

    /// Feeds one sample. Samples with a timestamp older than the previous one
    /// are ignored. Returns the transition if the state flipped.
    pub fn update(&mut self, sample_mg: T, t_ms: i64) -> Option<OccupancyTransition<T>> {
        if self.last_t_ms.is_some_and(|last| t_ms < last) {
            return None;
        }
        self.last_t_ms = Some(t_ms);

        self.window.push_back((t_ms, (sample_mg - self.cfg.baseline_mg).abs()));
        while let Some(&(t, _)) = self.window.front() {
            if ((t_ms - t) as f64) < self.window_ms {
                break;
            }
            self.window.pop_front();
        }
        let level = self.window.iter().fold(T::zero(), |a, &(_, v)| a + v) / T::from_usize_lossy(self.window.len());
        self.state.raw_level_mg = level;

        let above = level > self.cfg.threshold_mg;
        if above == self.state.occupied {
            self.pending_since = None;
            return None;
        }
        let since = *self.pending_since.get_or_insert(t_ms);
        if ((t_ms - since) as f64) < self.debounce_ms {
            return None;
        }
        self.pending_since = None;
        self.state.occupied = above;
        self.state.since_ms = t_ms;
        Some(OccupancyTransition { t_ms, occupied: above, level_mg: level })
    }

    /// Feeds a block of uniformly spaced samples starting at `t0_ms`.
    pub fn update_block(&mut self, samples: &[T], t0_ms: i64, period_ms: f64) -> Vec<OccupancyTransition<T>> {
        samples
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| self.update(s, t0_ms + (i as f64 * period_ms).round() as i64))
            .collect()
    }
}
