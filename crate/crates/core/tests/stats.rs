use drillpath::metrics::ErrorSample;
use drillpath::stats::{
    aggregate_run, boxplot_summary, max_normalize, radar_summary, AggregateOptions, BoxplotSummary,
};
use nalgebra::Vector3;
use proptest::prelude::*;

/// Order statistics with exact integer position arithmetic.
fn brute_force(values: &[f64]) -> BoxplotSummary {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let m = x.len() - 1;
    let q = |num: usize| {
        let j = m * num / 4;
        let g = ((m * num) % 4) as f64 / 4.0;
        if g == 0.0 {
            x[j]
        } else {
            x[j] + g * (x[j + 1] - x[j])
        }
    };
    let (q1, median, q3) = (q(1), q(2), q(3));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_low = values
        .iter()
        .copied()
        .filter(|v| *v >= lo)
        .fold(f64::INFINITY, f64::min);
    let whisker_high = values
        .iter()
        .copied()
        .filter(|v| *v <= hi)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut outliers: Vec<f64> = values.iter().copied().filter(|v| *v < lo || *v > hi).collect();
    outliers.sort_by(f64::total_cmp);
    BoxplotSummary {
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    }
}

fn close(a: &BoxplotSummary, b: &BoxplotSummary, tol: f64) -> bool {
    let pairs = [
        (a.median, b.median),
        (a.q1, b.q1),
        (a.q3, b.q3),
        (a.whisker_low, b.whisker_low),
        (a.whisker_high, b.whisker_high),
    ];
    pairs.iter().all(|(x, y)| (x - y).abs() <= tol)
        && a.outliers.len() == b.outliers.len()
        && a.outliers.iter().zip(&b.outliers).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn ten_thousand_values_match_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut values: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
    values.extend((0..40).map(|_| rng.random_range(5.0..50.0)));
    let ours = boxplot_summary(&values).unwrap();
    assert!(!ours.outliers.is_empty());
    assert!(close(&ours, &brute_force(&values), 1e-12));
}

fn sample(dev: Vector3<f64>, depth: f64) -> ErrorSample {
    ErrorSample {
        t: depth,
        deviation: dev,
        e_p: dev.norm(),
        e_o: dev * 0.1,
        depth,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn boxplot_matches_brute_force(values in prop::collection::vec(-1e3f64..1e3, 1..300)) {
        prop_assert!(close(&boxplot_summary(&values).unwrap(), &brute_force(&values), 1e-12));
    }

    #[test]
    fn boxplot_permutation_invariant(values in prop::collection::vec(-10.0f64..10.0, 1..100), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(boxplot_summary(&values).unwrap(), boxplot_summary(&shuffled).unwrap());
    }

    #[test]
    fn boxplot_shift_equivariant(values in prop::collection::vec(-10.0f64..10.0, 1..100), c in -5.0f64..5.0) {
        let a = boxplot_summary(&values).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let b = boxplot_summary(&shifted).unwrap();
        for (x, y) in [(a.median, b.median), (a.q1, b.q1), (a.q3, b.q3), (a.whisker_low, b.whisker_low), (a.whisker_high, b.whisker_high)] {
            prop_assert!((x + c - y).abs() < 1e-9);
        }
    }

    #[test]
    fn radar_in_unit_interval_and_idempotent(v in prop::array::uniform3(-100.0f64..100.0)) {
        let n = max_normalize(&Vector3::from(v));
        prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(n.contains(&1.0) || n == [0.0; 3]);
        prop_assert_eq!(max_normalize(&Vector3::from(n)), n);
    }

    #[test]
    fn mean_deviation_is_linear(
        devs in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..50),
        c in -3.0f64..3.0,
    ) {
        let opts = AggregateOptions::default();
        let base: Vec<_> = devs.iter().enumerate().map(|(i, d)| sample(Vector3::from(*d), i as f64)).collect();
        let scaled: Vec<_> = devs.iter().enumerate().map(|(i, d)| sample(Vector3::from(*d) * c, i as f64)).collect();
        let a = aggregate_run(&base, &[], &opts).unwrap();
        let b = aggregate_run(&scaled, &[], &opts).unwrap();
        prop_assert!((a.mean_deviation * c - b.mean_deviation).amax() < 1e-9);
        let r = radar_summary(&[a, b]).unwrap();
        prop_assert!(r.position.iter().chain(&r.orientation).all(|x| (0.0..=1.0).contains(x)));
    }
}
