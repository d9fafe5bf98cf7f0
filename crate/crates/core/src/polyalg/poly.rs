use std::collections::btree_map::{self, BTreeMap};
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use smallvec::SmallVec;

use super::{PolyError, VecPoly};

/// Exponent vector of a monomial `x^α = Π x_i^{α_i}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(SmallVec<[u16; 8]>);

impl MultiIndex {
    pub fn zeros(d: usize) -> Self {
        MultiIndex(SmallVec::from_elem(0, d))
    }

    pub fn unit(d: usize, i: usize) -> Self {
        let mut m = Self::zeros(d);
        m.0[i] = 1;
        m
    }

    pub fn from_slice(exps: &[u32]) -> Self {
        MultiIndex(exps.iter().map(|&e| e as u16).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i] as u32
    }

    pub fn set(&mut self, i: usize, e: u32) {
        self.0[i] = e as u16;
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().map(|&e| e as u32)
    }

    pub fn exponents(&self) -> Vec<u32> {
        self.iter().collect()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// `α! = Π α_i!`
    pub fn factorial(&self) -> f64 {
        self.iter()
            .map(|e| (1..=e).map(f64::from).product::<f64>())
            .product()
    }

    /// All exponent vectors in `d` variables with total degree exactly `deg`,
    /// in lexicographic order.
    pub fn all_of_degree(d: usize, deg: u32) -> Vec<MultiIndex> {
        fn rec(d: usize, i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if i + 1 == d {
                cur.push(left);
                out.push(MultiIndex::from_slice(cur));
                cur.pop();
                return;
            }
            for e in (0..=left).rev() {
                cur.push(e);
                rec(d, i + 1, left - e, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if d == 0 {
            if deg == 0 {
                out.push(MultiIndex::zeros(0));
            }
            return out;
        }
        rec(d, 0, deg, &mut Vec::with_capacity(d), &mut out);
        out
    }
}

/// A real polynomial in `dim` variables, stored as a sparse map from exponent
/// vectors to coefficients. Exact zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::zeros(dim), c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::unit(dim, i), 1.0);
        p
    }

    pub fn monomial(dim: usize, exps: &[u32], c: f64) -> Self {
        assert_eq!(exps.len(), dim, "exponent vector length must equal dim");
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::from_slice(exps), c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, f64)>>(dim: usize, terms: I) -> Self {
        let mut p = Self::zero(dim);
        for (m, c) in terms {
            assert_eq!(m.dim(), dim);
            p.add_term(m, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Accumulates `c·x^m`, dropping the entry if it cancels to zero.
    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + c;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
        }
    }

    pub fn remove(&mut self, m: &MultiIndex) -> Option<f64> {
        self.terms.remove(m)
    }

    /// Drops coefficients with `|c| ≤ tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|_, c| c.abs() > tol);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.dim);
        }
        Poly {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c * m.iter().zip(x).map(|(e, xi)| xi.powi(e as i32)).product::<f64>())
            .sum()
    }

    /// `∂p/∂x_i`
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (m, &c) in &self.terms {
            let e = m.get(i);
            if e == 0 {
                continue;
            }
            let mut m2 = m.clone();
            m2.set(i, e - 1);
            out.add_term(m2, c * e as f64);
        }
        out
    }

    pub fn gradient(&self) -> VecPoly {
        VecPoly::new((0..self.dim).map(|i| self.derivative(i)).collect())
            .expect("gradient components share the dimension")
    }

    /// `x_i · p(x)`
    pub fn mul_var(&self, i: usize) -> Self {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(m, &c)| {
                    let mut m2 = m.clone();
                    m2.set(i, m.get(i) + 1);
                    (m2, c)
                })
                .collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Poly::constant(self.dim, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Linear change of variables: returns `q(s) = p(L s)` where `L` has
    /// `self.dim()` rows. The result lives in `L.ncols()` variables.
    pub fn compose_linear(&self, l: &DMatrix<f64>) -> Self {
        assert_eq!(l.nrows(), self.dim, "linear map rows must match polynomial dimension");
        let out_dim = l.ncols();
        let forms: Vec<Poly> = (0..self.dim)
            .map(|i| {
                Poly::from_terms(
                    out_dim,
                    (0..out_dim).map(|j| (MultiIndex::unit(out_dim, j), l[(i, j)])),
                )
            })
            .collect();
        let max_deg: Vec<u32> = (0..self.dim)
            .map(|i| self.terms.keys().map(|m| m.get(i)).max().unwrap_or(0))
            .collect();
        let powers: Vec<Vec<Poly>> = forms
            .iter()
            .zip(&max_deg)
            .map(|(f, &md)| {
                let mut v = vec![Poly::constant(out_dim, 1.0)];
                for k in 1..=md as usize {
                    let next = &v[k - 1] * f;
                    v.push(next);
                }
                v
            })
            .collect();
        let mut out = Poly::zero(out_dim);
        for (m, &c) in &self.terms {
            let mut term = Poly::constant(out_dim, c);
            for (i, e) in m.iter().enumerate() {
                if e > 0 {
                    term = &term * &powers[i][e as usize];
                }
            }
            out += &term;
        }
        out
    }

    /// Substitutes numeric values for the leading `values.len()` variables,
    /// returning a polynomial in the remaining ones.
    pub fn fix_leading(&self, values: &[f64]) -> Self {
        let k = values.len();
        assert!(k <= self.dim);
        let out_dim = self.dim - k;
        let mut out = Poly::zero(out_dim);
        for (m, &c) in &self.terms {
            let scale: f64 = (0..k).map(|i| values[i].powi(m.get(i) as i32)).product();
            let rest = MultiIndex(m.0[k..].iter().copied().collect());
            out.add_term(rest, c * scale);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Poly) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// One line per term: `e₁ e₂ … e_d coeff`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (m, c) in &self.terms {
            for e in m.iter() {
                write!(s, "{e} ").unwrap();
            }
            writeln!(s, "{c:e}").unwrap();
        }
        s
    }

    pub fn from_text(dim: usize, text: &str) -> Result<Self, PolyError> {
        let mut p = Poly::zero(dim);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 1 {
                return Err(PolyError::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    dim + 1,
                    fields.len()
                )));
            }
            let exps = fields[..dim]
                .iter()
                .map(|f| f.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PolyError::Parse(format!("line {}: {e}", lineno + 1)))?;
            let c: f64 = fields[dim]
                .parse()
                .map_err(|e| PolyError::Parse(format!("line {}: {e}", lineno + 1)))?;
            p.add_term(MultiIndex::from_slice(&exps), c);
        }
        Ok(p)
    }
}

impl AddAssign<&Poly> for Poly {
    fn add_assign(&mut self, rhs: &Poly) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial addition");
        for (m, &c) in &rhs.terms {
            self.add_term(m.clone(), c);
        }
    }
}

impl SubAssign<&Poly> for Poly {
    fn sub_assign(&mut self, rhs: &Poly) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial subtraction");
        for (m, &c) in &rhs.terms {
            self.add_term(m.clone(), -c);
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scaled(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial product");
        let mut out = Poly::zero(self.dim);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &rhs.terms {
                out.add_term(ma.add(mb), ca * cb);
            }
        }
        out
    }
}
