//! Continuous wavelet transform with the complex Morlet wavelet.
//!
//! Coefficients are inner products of the signal with scaled, shifted copies
//! of the wavelet, one per input sample:
//!
//! ```text
//! W(f, n) = sum_k x[n + k] * conj(psi(k / fs, s)) / fs,   s = omega0 / (2 pi f)
//! ```
//!
//! The wavelet is truncated at `|t / s| <= 4`, i.e. `h = floor(4 s fs)` taps on
//! each side. Both ends of the signal are reflect-padded by `h` samples
//! (mirror without repeating the edge sample), so the first and last `h`
//! output samples are boundary-affected.

use std::collections::VecDeque;
use std::io::{self, Write};

use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::scalar::Real;
use crate::types::AccelSeries;

/// Wavelet support in units of scale on each side of the centre.
pub const SUPPORT_HALF_WIDTH: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CwtError {
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("frequency {freq_hz} Hz is not below the Nyquist frequency {nyquist_hz} Hz")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },
    #[error("signal is empty")]
    EmptySignal,
    #[error("omega0 must be at least 5, got {0}")]
    InvalidOmega0(f64),
    #[error("analysis frequencies must be strictly increasing")]
    FrequenciesNotIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorletParams<T> {
    omega0: T,
}

impl<T: Real> MorletParams<T> {
    pub fn new(omega0: T) -> Result<Self, CwtError> {
        if !(omega0 >= T::lit(5.0)) || !omega0.is_finite() {
            return Err(CwtError::InvalidOmega0(omega0.to_f64_lossy()));
        }
        Ok(MorletParams { omega0 })
    }

    pub fn omega0(&self) -> T {
        self.omega0
    }
}

impl<T: Real> Default for MorletParams<T> {
    fn default() -> Self {
        MorletParams { omega0: T::lit(6.0) }
    }
}

/// `pi^(-1/4) s^(-1/2) exp(i omega0 t / s) exp(-(t/s)^2 / 2)`, unit L2 norm at every scale.
pub fn morlet<T: Real>(t: T, scale: T, params: &MorletParams<T>) -> Result<Complex<T>, CwtError> {
    if !(scale > T::zero()) {
        return Err(CwtError::NonPositiveScale(scale.to_f64_lossy()));
    }
    Ok(morlet_unchecked(t, scale, params.omega0))
}

#[inline]
fn morlet_unchecked<T: Real>(t: T, scale: T, omega0: T) -> Complex<T> {
    let u = t / scale;
    let norm = T::PI().powf(T::lit(-0.25)) / scale.sqrt();
    let envelope = norm * (-(u * u) / T::lit(2.0)).exp();
    let phase = omega0 * u;
    Complex::new(envelope * phase.cos(), envelope * phase.sin())
}

/// Scale (seconds) whose centre frequency is `f_hz`.
pub fn freq_to_scale<T: Real>(f_hz: T, params: &MorletParams<T>) -> Result<T, CwtError> {
    if !(f_hz > T::zero()) {
        return Err(CwtError::NonPositiveFrequency(f_hz.to_f64_lossy()));
    }
    Ok(params.omega0 / (T::TAU() * f_hz))
}

pub fn scale_to_freq<T: Real>(scale: T, params: &MorletParams<T>) -> Result<T, CwtError> {
    if !(scale > T::zero()) {
        return Err(CwtError::NonPositiveScale(scale.to_f64_lossy()));
    }
    Ok(params.omega0 / (T::TAU() * scale))
}

/// Sampled, conjugated and `dt`-weighted wavelet taps for one analysis frequency.
///
/// `taps[j]` multiplies the sample at offset `j - half` from the output position.
#[derive(Debug, Clone)]
pub struct MorletKernel<T> {
    taps: Vec<Complex<T>>,
    half: usize,
    scale: T,
}

impl<T: Real> MorletKernel<T> {
    pub fn new(f_hz: T, sample_rate_hz: T, params: &MorletParams<T>) -> Result<Self, CwtError> {
        check_frequency(f_hz, sample_rate_hz)?;
        let scale = freq_to_scale(f_hz, params)?;
        let half = (T::lit(SUPPORT_HALF_WIDTH) * scale * sample_rate_hz).floor().to_usize().unwrap_or(0);
        let dt = T::one() / sample_rate_hz;
        let taps = (0..=2 * half)
            .map(|j| {
                let t = (T::from_usize_lossy(j) - T::from_usize_lossy(half)) * dt;
                morlet_unchecked(t, scale, params.omega0).conj() * dt
            })
            .collect();
        Ok(MorletKernel { taps, half, scale })
    }

    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn taps(&self) -> &[Complex<T>] {
        &self.taps
    }
}

fn check_frequency<T: Real>(f_hz: T, sample_rate_hz: T) -> Result<(), CwtError> {
    if !(f_hz > T::zero()) {
        return Err(CwtError::NonPositiveFrequency(f_hz.to_f64_lossy()));
    }
    let nyquist = sample_rate_hz / T::lit(2.0);
    if !(f_hz < nyquist) {
        return Err(CwtError::AboveNyquist { freq_hz: f_hz.to_f64_lossy(), nyquist_hz: nyquist.to_f64_lossy() });
    }
    Ok(())
}

/// Mirror index into `0..n` without repeating the edge sample (`x[-1] = x[1]`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Complex CWT coefficients at one frequency, one per input sample.
pub fn cwt_row_complex<T: Real>(
    signal: &AccelSeries<T>,
    f_hz: T,
    params: &MorletParams<T>,
) -> Result<Vec<Complex<T>>, CwtError> {
    if signal.is_empty() {
        return Err(CwtError::EmptySignal);
    }
    let kernel = MorletKernel::new(f_hz, signal.sample_rate_hz(), params)?;
    let mut planner = FftPlanner::new();
    Ok(fft_correlate(&signal.values, &kernel, &mut planner))
}

/// `|W(f, n)|` for every sample `n` of the signal.
pub fn cwt_row<T: Real>(signal: &AccelSeries<T>, f_hz: T, params: &MorletParams<T>) -> Result<Vec<T>, CwtError> {
    Ok(cwt_row_complex(signal, f_hz, params)?.into_iter().map(|c| c.norm()).collect())
}

fn fft_correlate<T: Real>(x: &[T], kernel: &MorletKernel<T>, planner: &mut FftPlanner<T>) -> Vec<Complex<T>> {
    let n = x.len();
    let h = kernel.half;
    let taps = kernel.taps.len();
    let padded_len = n + 2 * h;
    let fft_len = (padded_len + taps - 1).next_power_of_two();

    let mut a: Vec<Complex<T>> = (0..fft_len)
        .map(|p| {
            if p < padded_len {
                Complex::new(x[reflect_index(p as isize - h as isize, n)], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
        .collect();
    // Reversed taps turn the convolution into the correlation we want.
    let mut b = vec![Complex::new(T::zero(), T::zero()); fft_len];
    for (m, slot) in b.iter_mut().take(taps).enumerate() {
        *slot = kernel.taps[taps - 1 - m];
    }

    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u = *u * *v;
    }
    inv.process(&mut a);

    let scale = T::one() / T::from_usize_lossy(fft_len);
    a[2 * h..2 * h + n].iter().map(|c| *c * scale).collect()
}

/// |CWT| over a (frequency, time) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram<T> {
    pub freqs_hz: Vec<T>,
    /// Seconds relative to the first sample.
    pub times_s: Vec<T>,
    /// `magnitude[k][n]` is the coefficient magnitude at `freqs_hz[k]`, `times_s[n]`.
    pub magnitude: Vec<Vec<T>>,
}

impl<T: Real> Scalogram<T> {
    pub fn row(&self, k: usize) -> &[T] {
        &self.magnitude[k]
    }

    /// CSV with a header of times and one row per frequency (frequency first).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "freq_hz")?;
        for t in &self.times_s {
            write!(out, ",{t}")?;
        }
        writeln!(out)?;
        for (f, row) in self.freqs_hz.iter().zip(&self.magnitude) {
            write!(out, "{f}")?;
            for m in row {
                write!(out, ",{m}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Magnitude rows for each of `freqs_hz`. Rows are computed independently.
pub fn scalogram<T: Real>(
    signal: &AccelSeries<T>,
    freqs_hz: &[T],
    params: &MorletParams<T>,
) -> Result<Scalogram<T>, CwtError> {
    if signal.is_empty() {
        return Err(CwtError::EmptySignal);
    }
    if freqs_hz.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CwtError::FrequenciesNotIncreasing);
    }
    let kernels = freqs_hz
        .iter()
        .map(|&f| MorletKernel::new(f, signal.sample_rate_hz(), params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut planner = FftPlanner::new();
    let magnitude = kernels
        .iter()
        .map(|k| fft_correlate(&signal.values, k, &mut planner).into_iter().map(|c| c.norm()).collect())
        .collect();
    let fs = signal.sample_rate_hz();
    let times_s = (0..signal.len()).map(|i| T::from_usize_lossy(i) / fs).collect();
    Ok(Scalogram { freqs_hz: freqs_hz.to_vec(), times_s, magnitude })
}

/// Incremental CWT magnitude at one frequency.
///
/// Output sample `n` is emitted once input sample `n + h` has arrived, so the
/// stream lags the input by [`StreamingCwt::latency`] samples. Emitted values
/// equal the offline row everywhere except the trailing `h` samples the
/// offline transform computes from the right-hand reflection.
#[derive(Debug, Clone)]
pub struct StreamingCwt<T> {
    kernel: MorletKernel<T>,
    buffer: VecDeque<T>,
    /// Absolute index of `buffer[0]`.
    buffer_start: usize,
    received: usize,
    next_output: usize,
}

impl<T: Real> StreamingCwt<T> {
    pub fn new(f_hz: T, sample_rate_hz: T, params: &MorletParams<T>) -> Result<Self, CwtError> {
        Ok(StreamingCwt {
            kernel: MorletKernel::new(f_hz, sample_rate_hz, params)?,
            buffer: VecDeque::new(),
            buffer_start: 0,
            received: 0,
            next_output: 0,
        })
    }

    pub fn latency(&self) -> usize {
        self.kernel.half
    }

    /// Number of output samples emitted so far.
    pub fn emitted(&self) -> usize {
        self.next_output
    }

    /// Feeds samples and appends every newly available magnitude to `out`.
    pub fn push(&mut self, samples: &[T], out: &mut Vec<T>) {
        self.buffer.extend(samples.iter().copied());
        self.received += samples.len();
        let h = self.kernel.half;
        let zero = Complex::new(T::zero(), T::zero());
        while self.next_output + h < self.received {
            let n = self.next_output;
            let acc = self.kernel.taps.iter().enumerate().fold(zero, |acc, (j, tap)| {
                let idx = n as isize + j as isize - h as isize;
                // Only the left edge ever needs mirroring here.
                let abs = if idx < 0 { (-idx) as usize } else { idx as usize };
                acc + *tap * self.buffer[abs - self.buffer_start]
            });
            out.push(acc.norm());
            self.next_output += 1;
        }
        // Keep what the left reflection and the next window still need.
        let keep_from = self.next_output.saturating_sub(h);
        while self.buffer_start < keep_from {
            self.buffer.pop_front();
            self.buffer_start += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SensorChannel;

    fn series(values: Vec<f64>) -> AccelSeries<f64> {
        AccelSeries::new(SensorChannel::LIS3DHH_X, 0, values)
    }

    fn sine(f: f64, secs: f64, amp: f64) -> Vec<f64> {
        (0..(secs * 100.0) as usize).map(|i| amp * (std::f64::consts::TAU * f * i as f64 / 100.0).sin()).collect()
    }

    #[test]
    fn morlet_at_origin() {
        let p = MorletParams::default();
        let v = morlet(0.0_f64, 1.0, &p).unwrap();
        assert!((v.re - std::f64::consts::PI.powf(-0.25)).abs() < 1e-12);
        assert!((v.re - 0.7511).abs() < 1e-4);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn morlet_envelope_is_even() {
        let p = MorletParams::default();
        for t in [0.01, 0.3, 1.7, 4.0] {
            let a = morlet(t, 0.8_f64, &p).unwrap().norm();
            let b = morlet(-t, 0.8_f64, &p).unwrap().norm();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn morlet_rejects_bad_scale() {
        let p = MorletParams::default();
        assert!(morlet(0.0_f64, 0.0, &p).is_err());
        assert!(morlet(0.0_f64, -1.0, &p).is_err());
        assert!(MorletParams::new(4.0_f64).is_err());
    }

    #[test]
    fn scale_frequency_mapping() {
        let p = MorletParams::default();
        let f0 = 6.0 / std::f64::consts::TAU;
        assert!((freq_to_scale(f0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!((freq_to_scale(3.5_f64, &p).unwrap() - 0.27284).abs() < 1e-5);
        assert!(freq_to_scale(0.0_f64, &p).is_err());
        assert!(scale_to_freq(-1.0_f64, &p).is_err());
    }

    #[test]
    fn reflect_indices() {
        let n = 5;
        let got: Vec<usize> = (-6..11).map(|i| reflect_index(i, n)).collect();
        assert_eq!(got, vec![2, 3, 4, 3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn kernel_half_width() {
        let k = MorletKernel::new(3.5_f64, 100.0, &MorletParams::default()).unwrap();
        assert_eq!(k.half_width(), 109);
        let k = MorletKernel::new(0.8_f64, 100.0, &MorletParams::default()).unwrap();
        assert_eq!(k.half_width(), 477);
    }

    #[test]
    fn row_errors() {
        let p = MorletParams::default();
        assert_eq!(cwt_row(&series(vec![]), 3.5, &p), Err(CwtError::EmptySignal));
        assert!(matches!(cwt_row(&series(vec![1.0; 10]), 50.0, &p), Err(CwtError::AboveNyquist { .. })));
        assert!(cwt_row(&series(vec![1.0; 10]), 49.0, &p).is_ok());
    }

    #[test]
    fn zero_signal_gives_zero_row() {
        let row = cwt_row(&series(vec![0.0; 500]), 3.5, &MorletParams::default()).unwrap();
        assert!(row.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn row_is_homogeneous() {
        let x = sine(2.0, 10.0, 1.0);
        let p = MorletParams::default();
        let a = cwt_row(&series(x.clone()), 3.5, &p).unwrap();
        let b = cwt_row(&series(x.iter().map(|v| 2.0 * v).collect()), 3.5, &p).unwrap();
        let c = cwt_row(&series(x.iter().map(|v| -v).collect()), 3.5, &p).unwrap();
        for i in 0..a.len() {
            assert!((b[i] - 2.0 * a[i]).abs() < 1e-12);
            assert!((c[i] - a[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matched_frequency_dominates() {
        let x = series(sine(3.5, 60.0, 1.0));
        let p = MorletParams::default();
        let mean_at = |f: f64| {
            let r = cwt_row(&x, f, &p).unwrap();
            r.iter().sum::<f64>() / r.len() as f64
        };
        let best = mean_at(3.5);
        for f in [0.8, 2.0, 5.0, 10.0] {
            assert!(best > mean_at(f), "{f} Hz outranked 3.5 Hz");
        }
    }

    #[test]
    fn scalogram_rows_match_single_rows() {
        let x = series(sine(1.0, 20.0, 1.0));
        let p = MorletParams::default();
        let s = scalogram(&x, &[1.0, 4.0], &p).unwrap();
        assert_eq!(s.magnitude.len(), 2);
        assert_eq!(s.times_s.len(), x.len());
        let r = cwt_row(&x, 4.0, &p).unwrap();
        for (a, b) in s.row(1).iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(scalogram(&x, &[4.0, 1.0], &p), Err(CwtError::FrequenciesNotIncreasing));
        assert_eq!(scalogram(&x, &[1.0, 1.0], &p), Err(CwtError::FrequenciesNotIncreasing));
    }

    #[test]
    fn scalogram_csv_layout() {
        let x = series(vec![0.0; 3]);
        let s = scalogram(&x, &[2.0], &MorletParams::default()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "freq_hz,0,0.01,0.02\n2,0,0,0\n");
    }

    #[test]
    fn streaming_matches_offline_prefix() {
        let x: Vec<f64> = (0..1500).map(|i| ((i * 7919) % 113) as f64 / 50.0 - 1.1).collect();
        let p = MorletParams::default();
        for f in [0.8, 3.5] {
            let offline = cwt_row(&series(x.clone()), f, &p).unwrap();
            let mut s = StreamingCwt::new(f, 100.0, &p).unwrap();
            let mut out = Vec::new();
            for chunk in x.chunks(100) {
                s.push(chunk, &mut out);
            }
            assert_eq!(out.len(), x.len() - s.latency());
            for (a, b) in out.iter().zip(&offline) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn f32_tracks_f64() {
        let x64 = sine(3.5, 5.0, 2.0);
        let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
        let r64 = cwt_row(&series(x64), 3.5, &MorletParams::default()).unwrap();
        let r32 =
            cwt_row(&AccelSeries::new(SensorChannel::LIS3DHH_X, 0, x32), 3.5_f32, &MorletParams::default()).unwrap();
        let peak = r64.iter().cloned().fold(0.0, f64::max);
        for (a, b) in r32.iter().zip(&r64) {
            assert!((*a as f64 - b).abs() < 1e-4 * peak);
        }
    }
}
