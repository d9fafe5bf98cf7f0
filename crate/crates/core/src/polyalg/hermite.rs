use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::{MultiIndex, Poly};

/// Coefficients in the probabilists' Hermite product basis
/// `H_α(x) = Π_i He_{α_i}(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteCoeffs {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl HermiteCoeffs {
    pub fn zero(dim: usize) -> Self {
        HermiteCoeffs { dim, terms: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn insert(&mut self, m: MultiIndex, c: f64) {
        assert_eq!(m.dim(), self.dim);
        if c == 0.0 {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, c);
        }
    }

    fn accumulate(&mut self, m: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(m).or_insert(0.0);
        *e += c;
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }
}

impl From<Poly> for HermiteCoeffs {
    /// Reinterprets monomial coefficients as Hermite coefficients (no change
    /// of basis).
    fn from(p: Poly) -> Self {
        let mut h = HermiteCoeffs::zero(p.dim());
        for (m, c) in p.terms() {
            h.insert(m.clone(), c);
        }
        h
    }
}

const TABLE_DEGREE: usize = 48;

struct Tables {
    /// `he[k][j]`: coefficient of `x^j` in `He_k(x)`.
    he: Vec<Vec<f64>>,
    /// `mono[k][j]`: coefficient of `He_j` in `x^k`.
    mono: Vec<Vec<f64>>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let n = TABLE_DEGREE;
        let mut he = vec![vec![1.0]];
        he.push(vec![0.0, 1.0]);
        for k in 1..n {
            // He_{k+1} = x He_k − k He_{k−1}
            let mut next = vec![0.0; k + 2];
            for (j, c) in he[k].iter().enumerate() {
                next[j + 1] += c;
            }
            for (j, c) in he[k - 1].iter().enumerate() {
                next[j] -= k as f64 * c;
            }
            he.push(next);
        }
        let mut mono = vec![vec![1.0]];
        for k in 0..n {
            // x·He_j = He_{j+1} + j He_{j−1}
            let mut next = vec![0.0; k + 2];
            for (j, c) in mono[k].iter().enumerate() {
                next[j + 1] += c;
                if j > 0 {
                    next[j - 1] += j as f64 * c;
                }
            }
            mono.push(next);
        }
        Tables { he, mono }
    })
}

fn row(table: &[Vec<f64>], k: u32) -> &[f64] {
    assert!(
        (k as usize) < table.len(),
        "Hermite tables cover degree < {TABLE_DEGREE} per variable"
    );
    &table[k as usize]
}

/// Expands `coeff · Π_i Σ_j rows[i][j] b_j(x_i)` into `sink` by tensor product.
fn expand_product(rows: &[&[f64]], coeff: f64, sink: &mut dyn FnMut(MultiIndex, f64)) {
    let d = rows.len();
    let mut idx = MultiIndex::zeros(d);
    fn rec(
        rows: &[&[f64]],
        i: usize,
        acc: f64,
        idx: &mut MultiIndex,
        sink: &mut dyn FnMut(MultiIndex, f64),
    ) {
        if i == rows.len() {
            sink(idx.clone(), acc);
            return;
        }
        for (j, &c) in rows[i].iter().enumerate() {
            if c != 0.0 {
                idx.set(i, j as u32);
                rec(rows, i + 1, acc * c, idx, sink);
            }
        }
        idx.set(i, 0);
    }
    rec(rows, 0, coeff, &mut idx, sink);
}

pub fn hermite_to_monomial(h: &HermiteCoeffs) -> Poly {
    let t = tables();
    let mut out = Poly::zero(h.dim());
    for (m, c) in h.terms() {
        let rows: Vec<&[f64]> = m.iter().map(|e| row(&t.he, e)).collect();
        expand_product(&rows, c, &mut |mi, v| out.add_term(mi, v));
    }
    out
}

pub fn monomial_to_hermite(p: &Poly) -> HermiteCoeffs {
    let t = tables();
    let mut out = HermiteCoeffs::zero(p.dim());
    for (m, c) in p.terms() {
        let rows: Vec<&[f64]> = m.iter().map(|e| row(&t.mono, e)).collect();
        expand_product(&rows, c, &mut |mi, v| out.accumulate(mi, v));
    }
    out.prune();
    out
}
