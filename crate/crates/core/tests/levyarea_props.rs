use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use levy_coupling::levyarea::{
    decompose, normalize_to_x, pair_count, pair_index, sample_increment, simulate_fine_increment, wedge,
};

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn streaming_sampler_matches_stored_path(seed in any::<u64>(), d in 2usize..=4, n_sub in 2usize..=64) {
        let h = 1.0 / 16.0;
        let stored = decompose(&simulate_fine_increment(d, h, n_sub, &mut ChaCha8Rng::seed_from_u64(seed)));
        let streamed = sample_increment(d, h, n_sub, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(stored, streamed);
    }

    #[test]
    fn area_splits_into_bridge_and_residual(seed in any::<u64>(), d in 2usize..=4) {
        let inc = sample_increment(d, 0.25, 32, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(inc.decomposition_residual() < 1e-14);
        prop_assert_eq!(inc.a.len(), pair_count(d));
    }

    #[test]
    fn wedge_is_antisymmetric(a in prop::collection::vec(-3.0..3.0f64, 4), b in prop::collection::vec(-3.0..3.0f64, 4)) {
        let ab = wedge(&a, &b);
        let ba = wedge(&b, &a);
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert!((x + y).abs() < 1e-14);
        }
        prop_assert!(wedge(&a, &a).iter().all(|v| v.abs() < 1e-14));
        let (k, l) = (1, 3);
        prop_assert!((ab[pair_index(4, k, l)] - (a[k] * b[l] - a[l] * b[k])).abs() < 1e-14);
    }

    #[test]
    fn normalisation_scales(seed in any::<u64>(), n in 1usize..=64) {
        let inc = sample_increment(2, 1.0 / n as f64, 8, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = normalize_to_x(&inc, n);
        let nf = n as f64;
        prop_assert!((x[0] - (12.0 * nf).sqrt() * inc.zeta[0]).abs() < 1e-12);
        prop_assert!((x[2] - 12f64.sqrt() * nf * inc.k[0]).abs() < 1e-12);
    }
}
