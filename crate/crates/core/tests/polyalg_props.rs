use nalgebra::DMatrix;
use proptest::prelude::*;

use levy_coupling::polyalg::{
    gaussian_expectation, hermite_to_monomial, lsigma_apply, lsigma_invert, monomial_to_hermite, MultiIndex, Poly,
};

fn poly(dim: usize, max_deg: u32) -> impl Strategy<Value = Poly> {
    let idx: Vec<MultiIndex> = (0..=max_deg).flat_map(|k| MultiIndex::all_of_degree(dim, k)).collect();
    let n = idx.len();
    prop::collection::vec(-2.0..2.0f64, n).prop_map(move |c| Poly::from_terms(dim, idx.iter().cloned().zip(c)))
}

fn dim_and_poly(max_deg: u32) -> impl Strategy<Value = Poly> {
    (1usize..=3).prop_flat_map(move |d| poly(d, max_deg))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn hermite_basis_roundtrip(p in dim_and_poly(5)) {
        let back = hermite_to_monomial(&monomial_to_hermite(&p));
        prop_assert!(back.max_abs_diff(&p) < 1e-9);
    }

    #[test]
    fn product_evaluates_pointwise(
        (p, q, x) in (1usize..=3).prop_flat_map(|d| (poly(d, 3), poly(d, 3), prop::collection::vec(-1.5..1.5f64, d)))
    ) {
        let lhs = (&p * &q).eval(&x).unwrap();
        let rhs = p.eval(&x).unwrap() * q.eval(&x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn linear_substitution(
        (p, l, s) in (1usize..=3, 1usize..=3).prop_flat_map(|(d, k)| (
            poly(d, 3),
            prop::collection::vec(-1.0..1.0f64, d * k).prop_map(move |v| DMatrix::from_vec(d, k, v)),
            prop::collection::vec(-1.0..1.0f64, k),
        ))
    ) {
        let ls: Vec<f64> = (&l * nalgebra::DVector::from_column_slice(&s)).iter().copied().collect();
        let lhs = p.compose_linear(&l).eval(&s).unwrap();
        let rhs = p.eval(&ls).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn generator_has_zero_gaussian_mean(u in dim_and_poly(6)) {
        // Gaussian integration by parts: E[∇·p − x·p] = 0 for every p.
        let lp = lsigma_apply(&u.gradient());
        prop_assert!(gaussian_expectation(&lp).abs() < 1e-8 * (1.0 + lp.max_abs_coeff()));
    }

    #[test]
    fn lsigma_inverse_roundtrip(q in dim_and_poly(6)) {
        let mut g = q.clone();
        g -= &Poly::constant(q.dim(), gaussian_expectation(&q));
        let (u, grad) = lsigma_invert(&g).unwrap();
        prop_assert!(lsigma_apply(&grad).max_abs_diff(&g) < 1e-9);
        prop_assert!(u.gradient().max_abs_diff(&grad) == 0.0);
        prop_assert!(grad.curl_residual() < 1e-12);
    }

    #[test]
    fn text_roundtrip(p in dim_and_poly(4)) {
        let back = Poly::from_text(p.dim(), &p.to_text()).unwrap();
        prop_assert_eq!(back, p);
    }
}
