use proptest::prelude::*;

use levy_coupling::perturb::{rho_apply, rho_invert, smap_forward, smap_inverse, PerturbError, PerturbationSeries};
use levy_coupling::polyalg::{gaussian_expectation, MultiIndex, Poly, VecPoly};

fn potential(dim: usize, max_deg: u32, scale: f64) -> impl Strategy<Value = Poly> {
    let idx: Vec<MultiIndex> = (1..=max_deg).flat_map(|k| MultiIndex::all_of_degree(dim, k)).collect();
    let n = idx.len();
    prop::collection::vec(-scale..scale, n).prop_map(move |c| Poly::from_terms(dim, idx.iter().cloned().zip(c)))
}

/// `n` gradient fields of degree at most 4 in `dim ≤ 2` variables.
fn fields() -> impl Strategy<Value = Vec<VecPoly>> {
    (1usize..=2, 1usize..=3).prop_flat_map(|(dim, n)| {
        prop::collection::vec(potential(dim, 5, 0.5).prop_map(|u| u.gradient()), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn smap_inverse_undoes_forward(p in fields()) {
        let n = p.len();
        let s = smap_forward(&p, n).unwrap();
        for sj in &s {
            prop_assert!(gaussian_expectation(sj).abs() < 1e-9);
        }
        let back = smap_inverse(&s, n).unwrap();
        for (a, b) in p.iter().zip(&back) {
            prop_assert!(a.max_abs_diff(b) < 1e-8);
        }
    }

    // ε‖Dp‖ < 1/2 on the sampled box, so ρ is a perturbed identity there.
    #[test]
    fn newton_inverts_small_perturbations(
        (p, x) in (1usize..=2).prop_flat_map(|d| (
            prop::collection::vec(potential(d, 4, 0.3).prop_map(|u| u.gradient()), 1..=2),
            prop::collection::vec(-2.0..2.0f64, d),
        )),
        eps in 0.0..0.02f64,
    ) {
        let series = PerturbationSeries::new(eps, p).unwrap();
        let y = rho_apply(&series, &x).unwrap();
        let back = rho_invert(&series, &y, 1e-12, 100).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn rotation_field_is_rejected() {
    let field = VecPoly::new(vec![Poly::var(2, 1), Poly::var(2, 0).scaled(-1.0)]).unwrap();
    assert!(matches!(PerturbationSeries::new(0.1, vec![field]), Err(PerturbError::NotGradient { .. })));
}
