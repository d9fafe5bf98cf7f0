//! Polynomial perturbations `ρ_ε(x) = x + Σ_j ε^j p_j(x)` of the standard
//! Gaussian, the correspondence between the gradient fields `p_j` and the
//! density corrections `S_j` of `ρ_ε(Z)`, and Monte Carlo checks of both.

mod series;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::polyalg::{gaussian_expectation, lsigma_invert, MultiIndex, Poly, PolyError, VecPoly};
use crate::streams;
use series::{det_identity_plus, eval_poly_at_series, EpsSeries};

/// Relative tolerance on the curl of each `p_j`.
pub const GRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("term {index} is not a gradient field (curl residual {residual:e})")]
    NotGradient { index: usize, residual: f64 },
    #[error("eps must lie in [0, 1), got {0}")]
    InvalidEps(f64),
    #[error("empty perturbation series")]
    Empty,
    #[error("newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `ρ_ε(x) = x + Σ_{j=1}^n ε^j p_j(x)` with every `p_j` a gradient field.
#[derive(Clone, Debug)]
pub struct PerturbationSeries {
    eps: f64,
    terms: Vec<VecPoly>,
    dim: usize,
    /// Components of the full map `ρ_ε` as polynomials in `x`.
    map: Vec<Poly>,
    /// `jac[i][k] = ∂ρ_i/∂x_k`.
    jac: Vec<Vec<Poly>>,
}

impl PerturbationSeries {
    pub fn new(eps: f64, terms: Vec<VecPoly>) -> Result<Self, PerturbError> {
        if !(0.0..1.0).contains(&eps) {
            return Err(PerturbError::InvalidEps(eps));
        }
        let dim = terms.first().ok_or(PerturbError::Empty)?.dim();
        for (index, p) in terms.iter().enumerate() {
            if p.dim() != dim {
                return Err(PerturbError::DimensionMismatch { expected: dim, got: p.dim() });
            }
            let residual = p.curl_residual();
            if residual > GRADIENT_TOL * p.max_abs_coeff().max(1.0) {
                return Err(PerturbError::NotGradient { index, residual });
            }
        }
        let mut map: Vec<Poly> = (0..dim).map(|i| Poly::var(dim, i)).collect();
        let mut scale = 1.0;
        for p in &terms {
            scale *= eps;
            for (m, c) in map.iter_mut().zip(p.components()) {
                *m += &c.scaled(scale);
            }
        }
        let jac = map
            .iter()
            .map(|m| (0..dim).map(|k| m.derivative(k)).collect())
            .collect();
        Ok(PerturbationSeries { eps, terms, dim, map, jac })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn terms(&self) -> &[VecPoly] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The same polynomials with a different `ε`.
    pub fn with_eps(&self, eps: f64) -> Result<Self, PerturbError> {
        Self::new(eps, self.terms.clone())
    }

    fn check_dim(&self, len: usize) -> Result<(), PerturbError> {
        if len != self.dim {
            return Err(PerturbError::DimensionMismatch { expected: self.dim, got: len });
        }
        Ok(())
    }

    fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.map.iter().map(|m| m.eval_unchecked(x)).collect()
    }

    fn jacobian_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, k| self.jac[i][k].eval_unchecked(x))
    }

    /// `I + Σ ε^j Dp_j(x)`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, PerturbError> {
        self.check_dim(x.len())?;
        Ok(self.jacobian_unchecked(x))
    }
}

pub fn rho_apply(series: &PerturbationSeries, x: &[f64]) -> Result<Vec<f64>, PerturbError> {
    series.check_dim(x.len())?;
    Ok(series.apply_unchecked(x))
}

/// Newton's method for `ρ_ε(x) = y` started at `x = y`.
pub fn rho_invert(
    series: &PerturbationSeries,
    y: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, PerturbError> {
    series.check_dim(y.len())?;
    assert!(tol > 0.0, "tolerance must be positive");
    let mut x = y.to_vec();
    let residual_at = |x: &[f64]| -> Vec<f64> {
        series.apply_unchecked(x).iter().zip(y).map(|(a, b)| a - b).collect()
    };
    let sup = |r: &[f64]| r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut r = residual_at(&x);
    let mut res = sup(&r);
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(x);
        }
        let jac = series.jacobian_unchecked(&x);
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&r)) else {
            break;
        };
        for (xi, s) in x.iter_mut().zip(step.iter()) {
            *xi -= s;
        }
        r = residual_at(&x);
        res = sup(&r);
        if !res.is_finite() {
            break;
        }
    }
    if res <= tol {
        return Ok(x);
    }
    Err(PerturbError::NoConvergence { iterations: max_iter, residual: res })
}

/// `f_ε(y) = φ(y)(1 + Σ_j ε^j S_j(y))`, where `s[k]` is the coefficient of
/// `ε^{n0+k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityExpansion {
    pub s: Vec<Poly>,
    pub eps: f64,
    pub n0: usize,
    pub dim: usize,
}

impl DensityExpansion {
    pub fn from_series(series: &PerturbationSeries, n: usize) -> Self {
        let s = smap_forward(series.terms(), n).expect("series is non-empty");
        DensityExpansion { s, eps: series.eps(), n0: 1, dim: series.dim() }
    }

    /// `1 + Σ_j ε^j S_j` as a single polynomial.
    pub fn ratio_poly(&self) -> Poly {
        let mut out = Poly::constant(self.dim, 1.0);
        for (k, sj) in self.s.iter().enumerate() {
            out += &sj.scaled(self.eps.powi((self.n0 + k) as i32));
        }
        out
    }

    /// `∫ m(y) φ(y)(1 + Σ ε^j S_j(y)) dy`.
    pub fn moment(&self, m: &Poly) -> f64 {
        gaussian_expectation(&(m * &self.ratio_poly()))
    }

    pub fn max_centering_error(&self) -> f64 {
        self.s.iter().map(|p| gaussian_expectation(p).abs()).fold(0.0, f64::max)
    }
}

fn check_terms(p: &[VecPoly]) -> Result<usize, PerturbError> {
    let dim = p.first().ok_or(PerturbError::Empty)?.dim();
    for q in p {
        if q.dim() != dim {
            return Err(PerturbError::DimensionMismatch { expected: dim, got: q.dim() });
        }
    }
    Ok(dim)
}

/// Density corrections `S_1..S_n` of `ρ_ε(Z)`, `Z ~ N(0, I)`.
///
/// The inverse map `σ = y + Δ` is found as a formal series in ε from
/// `Δ = −Σ ε^j p_j(y + Δ)`; then
/// `f/φ = det(I + DΔ) · exp(−y·Δ − |Δ|²/2)` is expanded to order `ε^n`.
/// Terms beyond `n` are ignored and missing ones count as zero.
pub fn smap_forward(p: &[VecPoly], n: usize) -> Result<Vec<Poly>, PerturbError> {
    let dim = check_terms(p)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let used = &p[..p.len().min(n)];
    if used.iter().all(VecPoly::is_zero) {
        return Ok(vec![Poly::zero(dim); n]);
    }
    let y: Vec<EpsSeries> =
        (0..dim).map(|i| EpsSeries::constant_poly(Poly::var(dim, i), n)).collect();
    let mut delta: Vec<EpsSeries> = (0..dim).map(|_| EpsSeries::zero(dim, n)).collect();
    for _ in 0..n {
        let args: Vec<EpsSeries> = y
            .iter()
            .zip(&delta)
            .map(|(a, b)| {
                let mut s = a.clone();
                s.add_assign(b);
                s
            })
            .collect();
        delta = (0..dim)
            .map(|i| {
                let mut acc = EpsSeries::zero(dim, n);
                for (j, pj) in used.iter().enumerate() {
                    let v = eval_poly_at_series(pj.component(i), &args).shifted(j + 1);
                    acc.sub_assign(&v);
                }
                acc
            })
            .collect();
    }
    let ddelta: Vec<Vec<EpsSeries>> =
        delta.iter().map(|di| (0..dim).map(|k| di.derivative(k)).collect()).collect();
    let det = det_identity_plus(&ddelta);
    let mut exponent = EpsSeries::zero(dim, n);
    for (yi, di) in y.iter().zip(&delta) {
        exponent.sub_assign(&yi.mul(di));
        exponent.sub_assign(&di.mul(di).scaled(0.5));
    }
    let ratio = det.mul(&exponent.exp());
    Ok(ratio.into_coeffs().into_iter().skip(1).collect())
}

/// Inverse of [`smap_forward`]: gradient fields `p_1..p_n` whose density
/// corrections are `s`.
///
/// At order `j` the new field enters linearly as `−L p_j`, so
/// `p_j = ∇u` with `L∇u = −(S_j − N_j)`, where `N_j` is the order-`j`
/// correction produced by `p_1..p_{j−1}` alone.
pub fn smap_inverse(s: &[Poly], n: usize) -> Result<Vec<VecPoly>, PerturbError> {
    let Some(first) = s.first() else {
        return Ok(Vec::new());
    };
    let dim = first.dim();
    for sj in s {
        if sj.dim() != dim {
            return Err(PerturbError::DimensionMismatch { expected: dim, got: sj.dim() });
        }
        let mean = gaussian_expectation(sj);
        if mean.abs() > crate::polyalg::CENTERING_TOL {
            return Err(PolyError::NotCentered { mean }.into());
        }
    }
    let mut p: Vec<VecPoly> = Vec::with_capacity(n);
    for j in 1..=n {
        let target = s.get(j - 1).cloned().unwrap_or_else(|| Poly::zero(dim));
        let mut g = target;
        if j > 1 {
            let mut lower = p.clone();
            lower.push(VecPoly::zero(dim));
            let nj = smap_forward(&lower, j)?.pop().expect("order j present");
            g -= &nj;
        }
        let mean = gaussian_expectation(&g);
        g -= &Poly::constant(dim, mean);
        let (_, grad) = lsigma_invert(&g.scaled(-1.0))?;
        p.push(grad);
    }
    Ok(p)
}

/// One row of an [`ExpansionReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentDiscrepancy {
    pub monomial: MultiIndex,
    /// Plain sample mean of `m(Y)`.
    pub sample_mean: f64,
    /// `∫ m φ (1 + Σ ε^j S_j)`.
    pub expansion_value: f64,
    /// Estimate of `E m(Y) − expansion_value`.
    pub discrepancy: f64,
    pub std_error: f64,
    /// The same difference computed in closed form from Gaussian moments.
    pub exact_discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionReport {
    pub eps: f64,
    pub n: usize,
    pub samples: usize,
    pub entries: Vec<MomentDiscrepancy>,
    /// `ε^{n+1}`.
    pub scale: f64,
}

impl ExpansionReport {
    pub fn max_abs_discrepancy(&self) -> f64 {
        self.entries.iter().map(|e| e.discrepancy.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_exact(&self) -> f64 {
        self.entries.iter().map(|e| e.exact_discrepancy.abs()).fold(0.0, f64::max)
    }
}

/// Monomials of degree 1 through `max_deg` in `dim` variables.
fn low_monomials(dim: usize, max_deg: u32) -> Vec<MultiIndex> {
    (1..=max_deg).flat_map(|k| MultiIndex::all_of_degree(dim, k)).collect()
}

/// `m(ρ_ε(z))` split into its part of order `≤ n` in ε and the remainder.
fn taylor_split(series: &PerturbationSeries, m: &Poly, n: usize) -> (Poly, Poly) {
    let dim = series.dim();
    let full = m.degree() as usize * series.terms().len();
    let args: Vec<EpsSeries> = (0..dim)
        .map(|i| {
            let mut s = EpsSeries::constant_poly(Poly::var(dim, i), full);
            for (j, pj) in series.terms().iter().enumerate() {
                if j < full {
                    *s.coeff_mut(j + 1) += pj.component(i);
                }
            }
            s
        })
        .collect();
    let expanded = eval_poly_at_series(m, &args);
    let mut head = Poly::zero(dim);
    let mut tail = Poly::zero(dim);
    for k in 0..=full {
        let term = expanded.coeff(k).scaled(series.eps().powi(k as i32));
        if k <= n {
            head += &term;
        } else {
            tail += &term;
        }
    }
    (head, tail)
}

/// Compares low moments of `Y = ρ_ε(Z)` with those of the order-`n` density
/// expansion.
///
/// The estimator of each difference is the sample mean of
/// `m(Y) − T(Z) + E T(Z) − ∫ m φ(1 + Σ ε^j S_j)`, where `T` collects the terms
/// of `m(ρ_ε(z))` of order `≤ n` in ε. `T` is a control variate with known
/// Gaussian mean, so the noise scales with `ε^{n+1}` like the signal.
pub fn validate_expansion<R: Rng + ?Sized>(
    series: &PerturbationSeries,
    n: usize,
    m_samples: usize,
    rng: &mut R,
) -> ExpansionReport {
    let dim = series.dim();
    let expansion = DensityExpansion::from_series(series, n);
    let monomials = low_monomials(dim, 4);
    struct Prepared {
        mono: Poly,
        head: Poly,
        offset: f64,
        expansion_value: f64,
        exact: f64,
    }
    let prepared: Vec<Prepared> = monomials
        .iter()
        .map(|alpha| {
            let mono = Poly::monomial(dim, &alpha.exponents(), 1.0);
            let (head, tail) = taylor_split(series, &mono, n);
            let expansion_value = expansion.moment(&mono);
            let offset = gaussian_expectation(&head) - expansion_value;
            let exact = gaussian_expectation(&tail) + offset;
            Prepared { mono, head, offset, expansion_value, exact }
        })
        .collect();

    let seed = streams::derive_seed(rng);
    let k = prepared.len();
    // Per chunk: sums of m(Y), m(Y)², d, d² for each monomial.
    let partial: Vec<Vec<[f64; 4]>> = streams::chunks(m_samples)
        .into_par_iter()
        .enumerate()
        .map(|(c, (_, len))| {
            let mut r = streams::stream(seed, c as u64);
            let mut acc = vec![[0.0; 4]; k];
            let mut z = vec![0.0; dim];
            for _ in 0..len {
                for zi in z.iter_mut() {
                    *zi = r.sample(StandardNormal);
                }
                let y = series.apply_unchecked(&z);
                for (a, p) in acc.iter_mut().zip(&prepared) {
                    let my = p.mono.eval_unchecked(&y);
                    let d = my - p.head.eval_unchecked(&z) + p.offset;
                    a[0] += my;
                    a[1] += my * my;
                    a[2] += d;
                    a[3] += d * d;
                }
            }
            acc
        })
        .collect();
    let mut totals = vec![[0.0; 4]; k];
    for chunk in &partial {
        for (t, a) in totals.iter_mut().zip(chunk) {
            for q in 0..4 {
                t[q] += a[q];
            }
        }
    }
    let mf = m_samples as f64;
    let entries = monomials
        .into_iter()
        .zip(prepared)
        .zip(totals)
        .map(|((monomial, p), t)| {
            let mean_d = t[2] / mf;
            let var_d = (t[3] / mf - mean_d * mean_d).max(0.0) * mf / (mf - 1.0).max(1.0);
            MomentDiscrepancy {
                monomial,
                sample_mean: t[0] / mf,
                expansion_value: p.expansion_value,
                discrepancy: mean_d,
                std_error: (var_d / mf).sqrt(),
                exact_discrepancy: p.exact,
            }
        })
        .collect();
    ExpansionReport {
        eps: series.eps(),
        n,
        samples: m_samples,
        entries,
        scale: series.eps().powi(n as i32 + 1),
    }
}

/// `(E |Z − ρ_ε(Z)|_∞^p)^{1/p}`, the cost of the coupling `(Z, ρ_ε(Z))`.
pub fn trivial_coupling_distance<R: Rng + ?Sized>(
    series: &PerturbationSeries,
    p_norm: f64,
    m_samples: usize,
    rng: &mut R,
) -> f64 {
    assert!(p_norm >= 1.0, "p must be at least 1");
    let dim = series.dim();
    let seed = streams::derive_seed(rng);
    let total: f64 = streams::chunks(m_samples)
        .into_par_iter()
        .enumerate()
        .map(|(c, (_, len))| {
            let mut r = streams::stream(seed, c as u64);
            let mut z = vec![0.0; dim];
            let mut acc = 0.0;
            for _ in 0..len {
                for zi in z.iter_mut() {
                    *zi = r.sample(StandardNormal);
                }
                let y = series.apply_unchecked(&z);
                let sup = z.iter().zip(&y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                acc += sup.powf(p_norm);
            }
            acc
        })
        .sum();
    (total / m_samples as f64).powf(1.0 / p_norm)
}
