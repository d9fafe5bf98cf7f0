use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use levy_coupling::coupling::{
    build_g, build_he, build_m, couple_tree, g_norm_sq, inverse_norm, run_coupled_walk, simulate_tree, sym_root,
    DyadicSet, EdgeworthModel, GuardConfig, PreparedTree, SubCoupler,
};
use levy_coupling::levyarea::{pair_count, CumulantExpansion};

fn fourth_cumulant(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 - 3.0 * m2 * m2
}

/// Third central moment and its standard error.
fn third_cumulant(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let c: Vec<f64> = v.iter().map(|x| (x - mean).powi(3)).collect();
    let k3 = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|x| (x - k3).powi(2)).sum::<f64>() / (n - 1.0);
    (k3, (var / n).sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn gram_identity_and_floor(d in 2usize..=4, n in 1usize..=1024, w in prop::collection::vec(-6.0..6.0f64, 4)) {
        let w = &w[..d];
        let g = build_g(w, n);
        let m = build_m(w, n);
        let d2 = pair_count(d);
        let want = (DMatrix::identity(d2, d2) + &m * m.transpose()) / 12.0;
        prop_assert!((&g * g.transpose() - want).amax() < 1e-10 * (1.0 + m.amax().powi(2)));
        let w2: f64 = w.iter().map(|x| x * x).sum();
        prop_assert!((g_norm_sq(&g) - (1.0 + n as f64 * w2) / 12.0).abs() < 1e-9 * (1.0 + n as f64 * w2));
        prop_assert!(sym_root(&(&g * g.transpose())).unwrap().eig_min >= 1.0 / 12.0 - 1e-12);
    }

    #[test]
    fn node_covariance_inverse_is_bounded(
        d in 2usize..=3,
        level in 0u32..=4,
        w in prop::collection::vec(-4.0..4.0f64, 48),
    ) {
        let node = DyadicSet::root(level);
        let gs: Vec<DMatrix<f64>> = (0..node.len()).map(|r| build_g(&w[r * d..(r + 1) * d], node.len())).collect();
        let h = build_he(&node, &gs);
        prop_assert!(inverse_norm(&h).unwrap() <= 12.0 + 1e-9);
        prop_assert!((&h - h.transpose()).amax() < 1e-14);
    }

    #[test]
    fn coupled_tree_closes_at_every_node(seed in any::<u64>(), m in 0u32..=4, d in 2usize..=3, edgeworth in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = EdgeworthModel::new(&CumulantExpansion::planar_fourth_order(), 4);
        let (kind, model) = if edgeworth && d == 2 {
            (SubCoupler::Edgeworth, Some(&model))
        } else {
            (SubCoupler::Independent, None)
        };
        let tree = run_coupled_walk(m, d, kind, &GuardConfig::default(), model, 8, &mut rng).unwrap();
        for n in 1..=m {
            for k in 0..(1usize << (m - n)) {
                let e = DyadicSet { m, n, k };
                let (f, g) = e.children();
                let gap = (tree.z_at(f) + tree.z_at(g)) / std::f64::consts::SQRT_2 - tree.z_at(e);
                prop_assert!(gap.amax() < 1e-10 * (1.0 + tree.z_at(e).amax()));
            }
        }
        let d2 = pair_count(d);
        let nf = (1usize << m) as f64;
        for c in 0..d2 {
            let total: f64 = tree.b.chunks_exact(d2).map(|r| r[c]).sum::<f64>() * nf;
            let root = tree.z_at(DyadicSet::root(m))[c] * nf.sqrt();
            prop_assert!((total - root).abs() < 1e-9 * (1.0 + root.abs()));
        }
    }
}

#[test]
fn single_step_walk_compares_its_own_increment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = run_coupled_walk(0, 3, SubCoupler::Independent, &GuardConfig::default(), None, 16, &mut rng).unwrap();
    let direct = tree.a.iter().zip(&tree.b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(tree.max_deviation(), direct);
    assert_eq!(tree.b.len(), 3);
}

#[test]
fn independent_leaves_have_their_conditional_law() {
    // With the independent sub-coupler Z is Gaussian given the increments,
    // independent across leaves with Cov Z_r = G_r G_rᵗ.
    let m = 2;
    let walks = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let guards = GuardConfig::default();
    let mut first = Vec::with_capacity(walks);
    let mut last = Vec::with_capacity(walks);
    for _ in 0..walks {
        let sample = simulate_tree(m, 2, 2, &mut rng);
        let prep = PreparedTree::new(&sample, None);
        let tree = couple_tree(&prep, SubCoupler::Independent, &guards, None, &mut rng).unwrap();
        let white = |r: usize| {
            let h = &prep.g[r] * prep.g[r].transpose();
            (sym_root(&h).unwrap().inv_sqrt * tree.z_at(DyadicSet { m, n: 0, k: r }))[0]
        };
        first.push(white(0));
        last.push(white(3));
    }
    let n = walks as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / n;
    let cross = first.iter().zip(&last).map(|(a, b)| a * b).sum::<f64>() / n;
    let se_mean = (1.0 / n).sqrt();
    let se_var = (2.0 / n).sqrt();
    for v in [&first, &last] {
        assert!(mean(v).abs() < 4.0 * se_mean, "mean {}", mean(v));
        assert!((var(v) - 1.0).abs() < 4.0 * se_var, "variance {}", var(v));
    }
    assert!(cross.abs() < 4.0 * se_mean, "cross moment {cross}");
}

#[test]
fn edgeworth_root_reduces_whitened_cumulants() {
    let samples = 100_000;
    let model = EdgeworthModel::new(&CumulantExpansion::planar_fourth_order(), 4);
    let guards = GuardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut y = Vec::with_capacity(samples);
    let mut z = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sample = simulate_tree(0, 2, 64, &mut rng);
        let prep = PreparedTree::new(&sample, Some(&model));
        let tree = couple_tree(&prep, SubCoupler::Edgeworth, &guards, Some(&model), &mut rng).unwrap();
        let root = DyadicSet::root(0);
        let inv = sym_root(prep.h(root)).unwrap().inv_sqrt;
        y.push((&inv * prep.y(root))[0]);
        let zr: DVector<f64> = &inv * tree.z_at(root);
        z.push(zr[0]);
    }
    // Both laws are symmetric, so the third cumulant is zero on each side.
    let ((k3y, se3y), (k3z, se3z)) = (third_cumulant(&y), third_cumulant(&z));
    let (k4y, k4z) = (fourth_cumulant(&y), fourth_cumulant(&z));
    println!("third {k3y:.4} -> {k3z:.4}, fourth {k4y:.4} -> {k4z:.4}");
    assert!(k3y.abs() < 4.0 * se3y && k3z.abs() < 4.0 * se3z);
    assert!(k4z.abs() < k4y.abs());
}
