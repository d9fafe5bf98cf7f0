//! Transport of an Edgeworth-corrected law onto the standard Gaussian.
//!
//! For a whitened vector `V` with cumulant generating function
//! `½|s|² + c₄(s) + c₆(s) + …` the density is
//! `φ(v) Σ_α a_α He_α(v)` where `a_α` is the coefficient of `s^α` in
//! `exp(c₄ + c₆ + …)`. Truncating at the chosen cumulant order gives the
//! corrections `S_j`; `smap_inverse` turns them into a map `ρ` with
//! `ρ(Z) ≈ V` in law, and `ρ⁻¹(V)` is then close to `N(0, I)`.

use nalgebra::DMatrix;

use super::Fallback;
use crate::levyarea::CumulantExpansion;
use crate::perturb::{rho_invert, smap_inverse, PerturbationSeries};
use crate::polyalg::{gaussian_expectation, hermite_to_monomial, HermiteCoeffs, Poly};

/// Cumulants of `X` and the truncation order used by the transport.
#[derive(Clone, Debug)]
pub struct EdgeworthModel {
    kappa: u32,
    /// `c_{X,k}` for `k = 4, 6, …, kappa`, as polynomials in `d₁` variables.
    cgf: Vec<Poly>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl EdgeworthModel {
    /// `kappa` is the highest cumulant order kept (4 or 6).
    pub fn new(cumulants: &CumulantExpansion, kappa: u32) -> Self {
        assert!(kappa == 4 || kappa == 6, "cumulant order must be 4 or 6");
        assert!(cumulants.order() >= kappa as usize, "cumulants up to order {kappa} required");
        let cgf = (2..=kappa / 2).map(|h| cumulants.cgf_poly(2 * h)).collect();
        EdgeworthModel { kappa, cgf, newton_tol: 1e-10, newton_max_iter: 50 }
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    /// Number of ε-orders in the perturbation series.
    pub fn series_order(&self) -> usize {
        self.kappa as usize - 2
    }

    /// `t ↦ c_{X,k}(G_rᵗ t)` for each kept order `k`.
    pub fn leaf_polys(&self, g: &DMatrix<f64>) -> Vec<Poly> {
        let gt = g.transpose();
        self.cgf.iter().map(|c| c.compose_linear(&gt)).collect()
    }

    /// Density corrections `P_2, P_4, …` (indexed by half the ε-order) from
    /// the cumulant generating function parts `c₄, c₆, …`.
    fn corrections(&self, parts: &[Poly]) -> Vec<Poly> {
        let to_density = |p: &Poly| hermite_to_monomial(&HermiteCoeffs::from(p.clone()));
        let mut out = vec![to_density(&parts[0])];
        if self.kappa == 6 {
            let mut q = parts[1].clone();
            q += &(&parts[0] * &parts[0]).scaled(0.5);
            out.push(to_density(&q));
        }
        out
    }

    /// Maps `v` to `ρ⁻¹(v)` where `ρ(Z)` carries the Edgeworth law with
    /// cumulant generating function parts `parts` (`c₄, c₆, …`).
    ///
    /// With `condition = Some(ω)` the parts live in `(w, u)` variables, `w`
    /// first, and the law used is that of `u` given `w = ω`.
    pub fn transport(
        &self,
        parts: &[Poly],
        condition: Option<&[f64]>,
        eps: f64,
        v: &[f64],
    ) -> Result<Vec<f64>, Fallback> {
        let mut p = self.corrections(parts);
        if let Some(omega) = condition {
            for q in &mut p {
                *q = q.fix_leading(omega);
            }
        }
        let dim = p[0].dim();
        // Divide by the normaliser 1 + q₂ + q₄ order by order.
        let q2 = gaussian_expectation(&p[0]);
        let mut s2 = p[0].clone();
        s2 -= &Poly::constant(dim, q2);
        let mut s = vec![Poly::zero(dim), s2.scaled(eps.powi(-2))];
        if self.kappa == 6 {
            let q4 = gaussian_expectation(&p[1]);
            let mut s4 = p[1].clone();
            s4 -= &Poly::constant(dim, q4);
            s4 -= &s2.scaled(q2);
            s.push(Poly::zero(dim));
            s.push(s4.scaled(eps.powi(-4)));
        }
        let fields = smap_inverse(&s, self.series_order()).map_err(|_| Fallback::Numerical)?;
        let series = PerturbationSeries::new(eps, fields).map_err(|_| Fallback::Numerical)?;
        rho_invert(&series, v, self.newton_tol, self.newton_max_iter)
            .map_err(|_| Fallback::NoConvergence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::MultiIndex;

    #[test]
    fn gaussian_parts_give_identity() {
        let model = EdgeworthModel::new(&CumulantExpansion::planar_fourth_order(), 4);
        let z = model.transport(&[Poly::zero(1)], None, 0.5, &[1.3]).unwrap();
        assert!((z[0] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn univariate_correction_is_hermite_four() {
        // c₄(s) = κ s⁴/24 gives S ε² = κ He₄/24; first-order inverse field is
        // then −L⁻¹ of it, i.e. ∇ of κ He₄/96.
        let model = EdgeworthModel::new(&CumulantExpansion::planar_fourth_order(), 4);
        let kappa = 0.12;
        let c4 = Poly::monomial(1, &[4], kappa / 24.0);
        let v = 0.7;
        let z = model.transport(&[c4], None, 0.5, &[v]).unwrap()[0];
        // ρ(z) = z + κ/96 · He₄'(z) = z + κ/24 (z³ − 3z).
        let back = z + kappa / 24.0 * (z.powi(3) - 3.0 * z);
        assert!((back - v).abs() < 1e-10);
    }

    #[test]
    fn conditioning_on_independent_block_is_marginal() {
        // A joint cgf with no w-dependence conditions to the same law of u.
        let model = EdgeworthModel::new(&CumulantExpansion::planar_fourth_order(), 4);
        let joint = Poly::from_terms(2, [(MultiIndex::from_slice(&[0, 4]), 0.01)]);
        let marginal = Poly::monomial(1, &[4], 0.01);
        let a = model.transport(&[joint], Some(&[0.9]), 0.5, &[1.1]).unwrap();
        let b = model.transport(&[marginal], None, 0.5, &[1.1]).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }
}
