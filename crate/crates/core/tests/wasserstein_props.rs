use proptest::prelude::*;

use levy_coupling::wasserstein::{wp_assignment, wp_quantile_1d, EmpiricalMeasure};

fn sample(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=24).prop_flat_map(|n| (sample(n), sample(n)))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(96) })]

    #[test]
    fn symmetric_and_zero_on_diagonal((x, y) in pair(), p in 1.0..4.0f64) {
        let a = wp_quantile_1d(&x, &y, p).unwrap();
        let b = wp_quantile_1d(&y, &x, p).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert_eq!(wp_quantile_1d(&x, &x, p).unwrap(), 0.0);
    }

    #[test]
    fn translation_costs_its_length(x in sample(17), c in -3.0..3.0f64, p in 1.0..4.0f64) {
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert!((wp_quantile_1d(&x, &y, p).unwrap() - c.abs()).abs() < 1e-12);
    }

    #[test]
    fn assignment_agrees_with_quantiles((x, y) in pair(), p in 1.0..3.0f64) {
        let mu = EmpiricalMeasure::uniform(1, x.clone()).unwrap();
        let nu = EmpiricalMeasure::uniform(1, y.clone()).unwrap();
        let a = wp_assignment(&mu, &nu, p).unwrap();
        let q = wp_quantile_1d(&x, &y, p).unwrap();
        prop_assert!((a - q).abs() < 1e-9 * (1.0 + q));
    }

    #[test]
    fn nondecreasing_in_p((x, y) in pair(), p in 1.0..3.0f64, dp in 0.0..2.0f64) {
        let lo = wp_quantile_1d(&x, &y, p).unwrap();
        let hi = wp_quantile_1d(&x, &y, p + dp).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn triangle_inequality(x in sample(9), y in sample(9), z in sample(9), p in 1.0..3.0f64) {
        let xy = wp_quantile_1d(&x, &y, p).unwrap();
        let yz = wp_quantile_1d(&y, &z, p).unwrap();
        let xz = wp_quantile_1d(&x, &z, p).unwrap();
        prop_assert!(xz <= xy + yz + 1e-12);
    }

    #[test]
    fn unequal_sizes_match_replication(x in sample(3), y in sample(2), p in 1.0..3.0f64) {
        // Two copies of x against three copies of y is the same pair of laws
        // at equal size 6.
        let x6: Vec<f64> = x.iter().chain(&x).copied().collect();
        let y6: Vec<f64> = y.iter().chain(&y).chain(&y).copied().collect();
        let direct = wp_quantile_1d(&x, &y, p).unwrap();
        let replicated = wp_quantile_1d(&x6, &y6, p).unwrap();
        prop_assert!((direct - replicated).abs() < 1e-10);
    }
}
