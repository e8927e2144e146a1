use bcg_core::pipeline::calibrate_peaks;
use bcg_core::vitals::{detect_peaks, local_maxima, rate_from_peaks, HEART_RATE_RANGE_BPM, RESP_RATE_RANGE_BPM};
use bcg_core::{
    cwt_row, estimate_vitals, generate_bcg, AccelSeries, AnalysisConfig, BandThresholds, MorletParams, PeakThreshold,
    PeakTrain, SensorChannel, SynthParams, VitalsEstimate,
};
use proptest::prelude::*;

const CH: SensorChannel = SensorChannel::LIS3DHH_X;

/// Thresholds from a recording of 60 s empty furniture followed by 120 s occupied.
fn bedding_down_thresholds(params: &SynthParams, seed: u64) -> BandThresholds<f64> {
    let cal = SynthParams { seed, occupied_intervals_s: Some(vec![(60.0, f64::MAX)]), ..params.clone() };
    let rec = generate_bcg::<f64>(&cal, 180.0).unwrap();
    calibrate_peaks(rec.channel(CH), &AnalysisConfig::default()).unwrap()
}

fn run(params: &SynthParams, secs: f64, th: &BandThresholds<f64>) -> Vec<VitalsEstimate<f64>> {
    let rec = generate_bcg::<f64>(params, secs).unwrap();
    estimate_vitals(rec.channel(CH), &AnalysisConfig::default(), th).unwrap()
}

/// Every subset of the candidates that is pairwise separated and in which each
/// rejected candidate conflicts with a kept one of higher priority (larger, or
/// equal and earlier). Exactly one such subset exists.
fn oracle(trace: &[f64], fs: f64, threshold: f64, min_sep: f64) -> Vec<Vec<usize>> {
    let cands: Vec<usize> = local_maxima(trace).into_iter().filter(|&i| trace[i] > threshold).collect();
    let close = |a: usize, b: usize| (a.abs_diff(b) as f64) / fs < min_sep;
    let beats = |a: usize, b: usize| trace[a] > trace[b] || (trace[a] == trace[b] && a < b);
    let mut out = Vec::new();
    for mask in 0u32..(1 << cands.len()) {
        let set: Vec<usize> = (0..cands.len()).filter(|k| mask & (1 << k) != 0).map(|k| cands[k]).collect();
        let separated = set.iter().all(|&a| set.iter().all(|&b| a == b || !close(a, b)));
        let dominated =
            cands.iter().filter(|c| !set.contains(c)).all(|&c| set.iter().any(|&s| close(s, c) && beats(s, c)));
        if separated && dominated {
            out.push(set);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn peak_selection_matches_exhaustive_oracle(
        trace in prop::collection::vec(0u8..6, 3..40),
        threshold in 0u8..4,
        min_sep_samples in 1usize..8,
    ) {
        let trace: Vec<f64> = trace.into_iter().map(f64::from).collect();
        let fs = 10.0;
        let min_sep = min_sep_samples as f64 / fs;
        prop_assume!(local_maxima(&trace).len() <= 14);
        let got = detect_peaks(&trace, fs, &PeakThreshold::manual(f64::from(threshold)).unwrap(), min_sep).unwrap();
        let got_idx: Vec<usize> = got.peak_times_s.iter().map(|t| (t * fs).round() as usize).collect();
        let expected = oracle(&trace, fs, f64::from(threshold), min_sep);
        prop_assert_eq!(expected.len(), 1);
        prop_assert_eq!(&got_idx, &expected[0]);
        prop_assert!(got.peak_times_s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rate_is_translation_invariant(
        gaps in prop::collection::vec(0.2f64..3.0, 2..40),
        offset in -1e4f64..1e4,
    ) {
        let mut t = 0.0;
        let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let end = t + 0.5;
        let a = rate_from_peaks(&PeakTrain::from_times(times.clone(), end), 1e6).unwrap();
        let b = rate_from_peaks(&PeakTrain::from_times(times, end).shifted(offset), 1e6).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn adversarial_input_never_yields_implausible_rates(
        seed_values in prop::collection::vec(-1e4f64..1e4, 64),
        spike_every in 1usize..200,
        threshold in 0.0f64..1.0,
    ) {
        // A repeating pattern with spikes at an arbitrary period: rates outside
        // the physiological ranges are easy to provoke.
        let values: Vec<f64> = (0..4000)
            .map(|i| seed_values[i % 64] * 1e-3 + if i % spike_every == 0 { 500.0 } else { 0.0 })
            .collect();
        let th = BandThresholds { heart: PeakThreshold::manual(threshold).unwrap(), resp: PeakThreshold::manual(threshold).unwrap() };
        let est = estimate_vitals(&AccelSeries::new(CH, 0, values), &AnalysisConfig::default(), &th).unwrap();
        for e in est {
            if let Some(h) = e.heart_rate_bpm {
                prop_assert!((HEART_RATE_RANGE_BPM.0..=HEART_RATE_RANGE_BPM.1).contains(&h));
            }
            if let Some(r) = e.respiration_rate_bpm {
                prop_assert!((RESP_RATE_RANGE_BPM.0..=RESP_RATE_RANGE_BPM.1).contains(&r));
            }
        }
    }
}

#[test]
fn scaling_the_signal_keeps_peak_times_after_recalibration() {
    let rec = generate_bcg::<f64>(&SynthParams { seed: 3, ..Default::default() }, 60.0).unwrap();
    let base = rec.channel(CH);
    let params = MorletParams::default();
    let times = |c: f64| {
        let scaled = AccelSeries::new(CH, 0, base.values.iter().map(|v| v * c).collect());
        let row = cwt_row(&scaled, 3.5, &params).unwrap();
        let th = bcg_core::vitals::calibrate_threshold(&row, 5.0).unwrap();
        detect_peaks(&row, 100.0, &th, 0.25).unwrap().peak_times_s
    };
    let reference = times(1.0);
    assert!(reference.len() > 50);
    for c in [1e-3, 0.5, 7.25, 1e4] {
        assert_eq!(times(c), reference, "scale {c}");
    }
}

#[test]
fn noise_free_periodic_train_gives_exact_rate() {
    for hr in [50.0, 60.0, 72.0, 90.0, 100.0] {
        let p = SynthParams { heart_rate_bpm: hr, ..Default::default() }.noiseless();
        let th = bedding_down_thresholds(&SynthParams { heart_rate_bpm: hr, ..Default::default() }, 11);
        let est = run(&p, 150.0, &th);
        for e in &est[60..] {
            let got = e.heart_rate_bpm.expect("heart rate present");
            assert!((got - hr).abs() <= 0.5, "hr {hr}: {got} at {}", e.t_s);
        }
    }
}

#[test]
fn recovers_heart_and_respiration_after_first_window() {
    let p = SynthParams { heart_rate_bpm: 70.0, resp_rate_bpm: 15.0, seed: 21, ..Default::default() };
    let th = bedding_down_thresholds(&p, 22);
    let est = run(&p, 300.0, &th);
    assert_eq!(est.len(), 300);
    assert!(est[..59].iter().all(|e| e.provisional));
    for e in &est[60..] {
        assert!(!e.provisional);
        let h = e.heart_rate_bpm.unwrap();
        let r = e.respiration_rate_bpm.unwrap();
        assert!((h - 70.0).abs() <= 2.0, "heart {h} at {}", e.t_s);
        assert!((r - 15.0).abs() <= 2.0, "resp {r} at {}", e.t_s);
    }
}

#[test]
fn no_breathing_means_no_respiration_rate() {
    let subject = SynthParams { heart_rate_bpm: 70.0, resp_rate_bpm: 15.0, ..Default::default() };
    let heart = bedding_down_thresholds(&subject, 31).heart;
    // Respiration threshold from a measurement of the subject breathing.
    let breathing = generate_bcg::<f64>(&SynthParams { seed: 32, ..subject.clone() }, 300.0).unwrap();
    let resp = calibrate_peaks(breathing.channel(CH), &AnalysisConfig::default()).unwrap().resp;
    let th = BandThresholds { heart, resp };

    let est = run(&SynthParams { resp_amp_mg: 0.0, seed: 33, ..subject }, 180.0, &th);
    for e in &est[60..] {
        assert_eq!(e.respiration_rate_bpm, None, "at {}", e.t_s);
        let h = e.heart_rate_bpm.unwrap();
        assert!((h - 70.0).abs() <= 2.0, "heart {h}");
    }
}

#[test]
fn noise_floor_threshold_reports_noise_as_breathing() {
    // Known limitation of a threshold calibrated at the noise floor: without
    // breathing, noise maxima in the 0.8 Hz trace pass it.
    let subject = SynthParams { heart_rate_bpm: 70.0, resp_rate_bpm: 15.0, ..Default::default() };
    let th = bedding_down_thresholds(&subject, 31);
    let est = run(&SynthParams { resp_amp_mg: 0.0, seed: 33, ..subject }, 180.0, &th);
    let present = est[60..].iter().filter(|e| e.respiration_rate_bpm.is_some()).count();
    assert!(present > 0);
}

#[test]
fn zero_signal_has_no_rates() {
    let th = BandThresholds { heart: PeakThreshold::manual(0.0).unwrap(), resp: PeakThreshold::manual(0.0).unwrap() };
    let est = estimate_vitals(&AccelSeries::new(CH, 0, vec![0.0; 9000]), &AnalysisConfig::default(), &th).unwrap();
    assert!(est.iter().all(|e| e.heart_rate_bpm.is_none() && e.respiration_rate_bpm.is_none()));
}
