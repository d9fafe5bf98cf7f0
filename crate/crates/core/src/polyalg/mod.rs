//! Sparse multivariate polynomials over ℝ^d, the probabilists' Hermite basis,
//! exact Gaussian expectations, and the Gaussian divergence operator
//! `L p = ∇·p − xᵗp` together with its inverse on gradient fields.

mod hermite;
mod poly;
mod vecpoly;

pub use hermite::{hermite_to_monomial, monomial_to_hermite, HermiteCoeffs};
pub use poly::{MultiIndex, Poly};
pub use vecpoly::VecPoly;

use thiserror::Error;

/// Absolute tolerance used to decide that a polynomial is centred.
pub const CENTERING_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial is not centred: gaussian expectation {mean:e}")]
    NotCentered { mean: f64 },
    #[error("cannot parse polynomial text: {0}")]
    Parse(String),
}

/// `(2k−1)!!`, the `2k`-th moment of a standard normal; zero for odd orders.
pub fn normal_moment(order: u32) -> f64 {
    if order % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut j = order as i64 - 1;
    while j > 1 {
        acc *= j as f64;
        j -= 2;
    }
    acc
}

/// `∫ p(x) φ(x) dx` for the standard Gaussian density, evaluated exactly from
/// the moments of independent coordinates.
pub fn gaussian_expectation(p: &Poly) -> f64 {
    p.terms()
        .map(|(alpha, c)| c * alpha.iter().map(normal_moment).product::<f64>())
        .sum()
}

/// `L p(x) = ∇·p(x) − xᵗ p(x)`.
pub fn lsigma_apply(p: &VecPoly) -> Poly {
    let d = p.dim();
    let mut out = Poly::zero(d);
    for (i, comp) in p.components().iter().enumerate() {
        out += &comp.derivative(i);
        out -= &comp.mul_var(i);
    }
    out
}

/// Solves `L ∇u = g` for a centred `g`.
///
/// In the Hermite product basis `L ∇H_α = −|α| H_α`, so each coefficient is
/// divided by `−|α|`. The returned `u` has zero constant term.
pub fn lsigma_invert(g: &Poly) -> Result<(Poly, VecPoly), PolyError> {
    let mean = gaussian_expectation(g);
    if mean.abs() > CENTERING_TOL {
        return Err(PolyError::NotCentered { mean });
    }
    let h = monomial_to_hermite(g);
    let mut uh = HermiteCoeffs::zero(g.dim());
    for (alpha, c) in h.terms() {
        let deg = alpha.degree();
        if deg == 0 {
            continue;
        }
        uh.insert(alpha.clone(), -c / deg as f64);
    }
    let mut u = hermite_to_monomial(&uh);
    u.remove(&MultiIndex::zeros(g.dim()));
    let grad = u.gradient();
    Ok((u, grad))
}

/// Replaces each `S_j` (indexed `j = n0, n0+1, …`) by `S_j − ∫S_jφ` and returns
/// `β = Σ_j eps^j ∫S_jφ`.
pub fn center_polynomials(s: &[Poly], eps: f64, n0: usize) -> (Vec<Poly>, f64) {
    let mut beta = 0.0;
    let centred = s
        .iter()
        .enumerate()
        .map(|(idx, sj)| {
            let mean = gaussian_expectation(sj);
            beta += eps.powi((n0 + idx) as i32) * mean;
            let mut c = sj.clone();
            c -= &Poly::constant(sj.dim(), mean);
            c
        })
        .collect();
    (centred, beta)
}
