use nalgebra::DMatrix;

use super::{Poly, PolyError};

/// An ℝ^d-valued polynomial map on ℝ^d.
#[derive(Clone, Debug, PartialEq)]
pub struct VecPoly {
    comps: Vec<Poly>,
}

impl VecPoly {
    /// Builds from components; all components must live in `comps.len()`
    /// variables.
    pub fn new(comps: Vec<Poly>) -> Result<Self, PolyError> {
        let d = comps.len();
        for c in &comps {
            if c.dim() != d {
                return Err(PolyError::DimensionMismatch { expected: d, got: c.dim() });
            }
        }
        Ok(VecPoly { comps })
    }

    pub fn zero(d: usize) -> Self {
        VecPoly { comps: (0..d).map(|_| Poly::zero(d)).collect() }
    }

    /// The identity map `x ↦ x`, which is `∇(|x|²/2)`.
    pub fn identity(d: usize) -> Self {
        VecPoly { comps: (0..d).map(|i| Poly::var(d, i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &Poly {
        &self.comps[i]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Poly::is_zero)
    }

    pub fn degree(&self) -> u32 {
        self.comps.iter().map(Poly::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.comps.iter().map(Poly::max_abs_coeff).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        VecPoly { comps: self.comps.iter().map(|c| c.scaled(s)).collect() }
    }

    pub fn divergence(&self) -> Poly {
        let mut out = Poly::zero(self.dim());
        for (i, c) in self.comps.iter().enumerate() {
            out += &c.derivative(i);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        if x.len() != self.dim() {
            return Err(PolyError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.comps.iter().map(|c| c.eval_unchecked(x)).collect())
    }

    /// Jacobian matrix `D p(x)` with entry `(i, k) = ∂p_i/∂x_k`.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        let d = self.dim();
        if x.len() != d {
            return Err(PolyError::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(DMatrix::from_fn(d, d, |i, k| self.comps[i].derivative(k).eval_unchecked(x)))
    }

    /// Largest mismatch `|∂_k p_i − ∂_i p_k|` over coefficients; zero for a
    /// gradient field.
    pub fn curl_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for k in (i + 1)..d {
                let a = self.comps[i].derivative(k);
                let b = self.comps[k].derivative(i);
                worst = worst.max(a.max_abs_diff(&b));
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &VecPoly) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}
