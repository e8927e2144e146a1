use bcg_core::occupancy::{OccupancyConfig, OccupancyDetector, OccupancyTransition};
use bcg_core::SensorChannel;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const GAP_MG: f64 = 50.0;

fn config() -> OccupancyConfig<f64> {
    OccupancyConfig::new(SensorChannel::LIS3DHH_X, 0.0, 25.0).unwrap()
}

fn run(samples: &[f64]) -> Vec<OccupancyTransition<f64>> {
    let mut det = OccupancyDetector::new(config(), 0).unwrap();
    det.update_block(samples, 0, 10.0)
}

/// 0 mg until 10 s, then 50 mg, for 40 s; `dropout` zeroes `[start, end)` seconds.
fn step_fixture(seed: u64, sigma: f64, dropouts: &[(f64, f64)]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..4000)
        .map(|i| {
            let t = i as f64 / 100.0;
            let dropped = dropouts.iter().any(|&(a, b)| t >= a && t < b);
            let level = if t >= 10.0 && !dropped { GAP_MG } else { 0.0 };
            level + noise.sample(&mut rng)
        })
        .collect()
}

#[test]
fn noise_below_a_sixth_of_the_gap_never_causes_spurious_transitions() {
    for seed in 0..100 {
        let tr = run(&step_fixture(seed, GAP_MG / 6.0 * 0.99, &[]));
        assert_eq!(tr.len(), 1, "seed {seed}: {tr:?}");
        assert!(tr[0].occupied);
        assert!((12_000..=13_000).contains(&tr[0].t_ms), "seed {seed}: {}", tr[0].t_ms);
    }
}

#[test]
fn short_dropouts_are_ignored_across_seeds() {
    let dropouts = [(15.0, 15.5), (22.3, 22.8), (30.0, 30.5)];
    for seed in 0..100 {
        let tr = run(&step_fixture(seed, 2.0, &dropouts));
        assert_eq!(tr.len(), 1, "seed {seed}: {tr:?}");
    }
}

#[test]
fn same_input_same_trace() {
    let x = step_fixture(5, 8.0, &[(20.0, 24.0)]);
    assert_eq!(run(&x), run(&x));
    assert_eq!(run(&x).len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn at_most_one_flip_per_debounce_interval(
        segments in prop::collection::vec((0.0f64..60.0, 1usize..400), 1..40),
    ) {
        let samples: Vec<f64> = segments.iter().flat_map(|&(v, n)| std::iter::repeat(v).take(n)).collect();
        let tr = run(&samples);
        for w in tr.windows(2) {
            prop_assert!(w[1].t_ms - w[0].t_ms >= 2000, "{:?}", w);
            prop_assert_ne!(w[0].occupied, w[1].occupied);
        }
        if let Some(first) = tr.first() {
            prop_assert!(first.occupied);
            prop_assert!(first.t_ms >= 2000);
        }
    }
}
