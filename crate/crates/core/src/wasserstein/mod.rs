//! Empirical Wasserstein-p distances under the sup-norm ground metric: the 1D
//! quantile coupling, exact assignment for small batches, a sliced proxy, and
//! the density-difference upper bound `W_p ≤ 2^{1−1/p}(∫|x|^p d|μ−ν|)^{1/p}`.

mod hungarian;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub use hungarian::solve_assignment;

/// Largest batch accepted by [`wp_assignment`].
pub const ASSIGNMENT_CAP: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WassersteinError {
    #[error("empty sample")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch size {0} exceeds the assignment cap {ASSIGNMENT_CAP}")]
    TooLarge(usize),
    #[error("assignment needs equal sizes and uniform weights")]
    NonUniform,
    #[error("weights must be non-negative and sum to one")]
    BadWeights,
    #[error("density integrates to {0}, not 1")]
    NotNormalized(f64),
}

/// Weighted point cloud in ℝ^d, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self, WassersteinError> {
        if dim == 0 || points.is_empty() {
            return Err(WassersteinError::Empty);
        }
        if !points.len().is_multiple_of(dim) {
            return Err(WassersteinError::DimensionMismatch { expected: dim, got: points.len() % dim });
        }
        let n = points.len() / dim;
        Ok(EmpiricalMeasure { dim, points, weights: vec![1.0 / n as f64; n] })
    }

    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self, WassersteinError> {
        let mut m = Self::uniform(dim, points)?;
        if weights.len() != m.len()
            || weights.iter().any(|w| *w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(WassersteinError::BadWeights);
        }
        m.weights = weights;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-15)
    }

    fn project(&self, theta: &[f64]) -> Vec<f64> {
        self.points
            .chunks_exact(self.dim)
            .map(|p| p.iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Optimal transport between two 1D empirical measures with uniform weights,
/// `(∫₀¹ |F⁻¹(u) − G⁻¹(u)|^p du)^{1/p}`.
///
/// With equal sizes this is the sorted pairing. Unequal sizes are handled
/// exactly by integrating over the merged quantile breakpoints.
pub fn wp_quantile_1d(x: &[f64], y: &[f64], p: f64) -> Result<f64, WassersteinError> {
    if x.is_empty() || y.is_empty() {
        return Err(WassersteinError::Empty);
    }
    assert!(p >= 1.0, "p must be at least 1");
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    if xs.len() == ys.len() {
        let total: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b).abs().powf(p)).sum();
        return Ok((total / xs.len() as f64).powf(1.0 / p));
    }
    let (nx, ny) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < nx && j < ny {
        let ux = (i + 1) as f64 / nx as f64;
        let uy = (j + 1) as f64 / ny as f64;
        let next = ux.min(uy);
        total += (next - u) * (xs[i] - ys[j]).abs().powf(p);
        u = next;
        if ux <= uy {
            i += 1;
        }
        if uy <= ux {
            j += 1;
        }
    }
    Ok(total.powf(1.0 / p))
}

/// Exact `W_p` between equal-size uniform empirical measures with cost
/// `|x − y|_∞^p`, by minimum-cost perfect matching.
pub fn wp_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64, WassersteinError> {
    assert!(p >= 1.0, "p must be at least 1");
    if mu.dim() != nu.dim() {
        return Err(WassersteinError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if mu.len() != nu.len() || !mu.is_uniform() || !nu.is_uniform() {
        return Err(WassersteinError::NonUniform);
    }
    let n = mu.len();
    if n > ASSIGNMENT_CAP {
        return Err(WassersteinError::TooLarge(n));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = sup_dist(mu.point(i), nu.point(j)).powf(p);
        }
    }
    let (_, total) = solve_assignment(&cost, n);
    Ok((total.max(0.0) / n as f64).powf(1.0 / p))
}

/// Mean over `n_proj` random unit directions of the 1D quantile distance of
/// the projected samples. A heuristic proxy; it does not estimate the
/// sup-norm `W_p`.
pub fn wp_sliced<R: Rng + ?Sized>(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    n_proj: usize,
    rng: &mut R,
) -> Result<f64, WassersteinError> {
    if mu.dim() != nu.dim() {
        return Err(WassersteinError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let d = mu.dim();
    let mut acc = 0.0;
    for _ in 0..n_proj {
        let mut theta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        theta.iter_mut().for_each(|t| *t /= norm);
        acc += wp_quantile_1d(&mu.project(&theta), &nu.project(&theta), p)?;
    }
    Ok(acc / n_proj as f64)
}

/// `E|θ₁|` for `θ` uniform on the unit sphere of ℝ^d, so that the sliced
/// distance of a translation by `t` converges to `|t|₂ E|θ₁|`.
pub fn mean_abs_direction_coordinate(d: usize) -> f64 {
    let df = d as f64;
    (ln_gamma(df / 2.0) - ln_gamma((df + 1.0) / 2.0)).exp() / std::f64::consts::PI.sqrt()
}

/// Rectangular grid of equally spaced nodes, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Self {
        assert!(lo.len() == hi.len() && lo.len() == counts.len() && !lo.is_empty());
        assert!(counts.iter().all(|&c| c >= 2));
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b));
        Grid { lo, hi, counts }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.counts[axis] - 1) as f64
    }

    /// Node coordinates and trapezoid weights, in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        (0..self.len()).map(move |mut flat| {
            let d = self.dim();
            let mut x = vec![0.0; d];
            let mut w = 1.0;
            for axis in (0..d).rev() {
                let c = self.counts[axis];
                let i = flat % c;
                flat /= c;
                let h = self.step(axis);
                x[axis] = self.lo[axis] + i as f64 * h;
                w *= if i == 0 || i == c - 1 { 0.5 * h } else { h };
            }
            (x, w)
        })
    }

    /// Evaluates `f` at every node.
    pub fn tabulate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.nodes().map(|(x, _)| f(&x)).collect()
    }
}

/// Tolerance on `|∫f − 1|` accepted by [`density_diff_bound`].
pub const NORMALIZATION_TOL: f64 = 1e-3;

/// `2^{1−1/p} (∫ |x|_∞^p |f − g| dx)^{1/p}` by trapezoid quadrature.
pub fn density_diff_bound(f: &[f64], g: &[f64], p: f64, grid: &Grid) -> Result<f64, WassersteinError> {
    assert!(p >= 1.0, "p must be at least 1");
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(WassersteinError::DimensionMismatch {
            expected: grid.len(),
            got: if f.len() != grid.len() { f.len() } else { g.len() },
        });
    }
    let mut mass_f = 0.0;
    let mut mass_g = 0.0;
    let mut integral = 0.0;
    for ((x, w), (a, b)) in grid.nodes().zip(f.iter().zip(g)) {
        mass_f += w * a;
        mass_g += w * b;
        let norm = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        integral += w * norm.powf(p) * (a - b).abs();
    }
    for mass in [mass_f, mass_g] {
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(WassersteinError::NotNormalized(mass));
        }
    }
    Ok(2f64.powf(1.0 - 1.0 / p) * integral.powf(1.0 / p))
}
