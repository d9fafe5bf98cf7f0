//! Truncated power series in ε whose coefficients are polynomials.

use crate::polyalg::Poly;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct EpsSeries {
    /// `coeffs[j]` multiplies `ε^j`; length is `order + 1`.
    coeffs: Vec<Poly>,
}

impl EpsSeries {
    pub fn zero(dim: usize, order: usize) -> Self {
        EpsSeries { coeffs: vec![Poly::zero(dim); order + 1] }
    }

    pub fn constant_poly(p: Poly, order: usize) -> Self {
        let dim = p.dim();
        let mut s = Self::zero(dim, order);
        s.coeffs[0] = p;
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].dim()
    }

    pub fn coeff(&self, j: usize) -> &Poly {
        &self.coeffs[j]
    }

    pub fn coeff_mut(&mut self, j: usize) -> &mut Poly {
        &mut self.coeffs[j]
    }

    pub fn into_coeffs(self) -> Vec<Poly> {
        self.coeffs
    }

    pub fn add_assign(&mut self, rhs: &EpsSeries) {
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, rhs: &EpsSeries) {
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        EpsSeries { coeffs: self.coeffs.iter().map(|c| c.scaled(s)).collect() }
    }

    /// Multiplies by `ε^k`, dropping what falls beyond the truncation order.
    pub fn shifted(&self, k: usize) -> Self {
        let order = self.order();
        let mut out = Self::zero(self.dim(), order);
        for j in 0..=order {
            if j + k <= order {
                out.coeffs[j + k] = self.coeffs[j].clone();
            }
        }
        out
    }

    pub fn mul(&self, rhs: &EpsSeries) -> Self {
        let order = self.order().min(rhs.order());
        let mut out = Self::zero(self.dim(), order);
        for i in 0..=order {
            if self.coeffs[i].is_zero() {
                continue;
            }
            for j in 0..=(order - i) {
                if rhs.coeffs[j].is_zero() {
                    continue;
                }
                out.coeffs[i + j] += &(&self.coeffs[i] * &rhs.coeffs[j]);
            }
        }
        out
    }

    pub fn derivative(&self, var: usize) -> Self {
        EpsSeries { coeffs: self.coeffs.iter().map(|c| c.derivative(var)).collect() }
    }

    fn has_zero_constant(&self) -> bool {
        self.coeffs[0].is_zero()
    }

    /// `exp(s)` for a series with vanishing ε⁰ coefficient.
    pub fn exp(&self) -> Self {
        assert!(self.has_zero_constant(), "exp requires a series without ε⁰ term");
        let order = self.order();
        let mut out = Self::constant_poly(Poly::constant(self.dim(), 1.0), order);
        let mut power = out.clone();
        for k in 1..=order {
            power = power.mul(self).scaled(1.0 / k as f64);
            out.add_assign(&power);
        }
        out
    }

    #[cfg(test)]
    /// `log(1 + s)` for a series with vanishing ε⁰ coefficient.
    pub fn log1p(&self) -> Self {
        assert!(self.has_zero_constant(), "log1p requires a series without ε⁰ term");
        let order = self.order();
        let mut out = Self::zero(self.dim(), order);
        let mut power = Self::constant_poly(Poly::constant(self.dim(), 1.0), order);
        for k in 1..=order {
            power = power.mul(self);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out.add_assign(&power.scaled(sign / k as f64));
        }
        out
    }
}

/// Evaluates the polynomial `p` at series-valued arguments.
pub(crate) fn eval_poly_at_series(p: &Poly, args: &[EpsSeries]) -> EpsSeries {
    assert_eq!(p.dim(), args.len());
    let order = args.iter().map(EpsSeries::order).min().unwrap_or(0);
    let out_dim = args.first().map(EpsSeries::dim).unwrap_or(0);
    let mut out = EpsSeries::zero(out_dim, order);
    if p.is_zero() {
        return out;
    }
    let max_deg: Vec<u32> = (0..p.dim())
        .map(|i| p.terms().map(|(m, _)| m.get(i)).max().unwrap_or(0))
        .collect();
    let one = EpsSeries::constant_poly(Poly::constant(out_dim, 1.0), order);
    let powers: Vec<Vec<EpsSeries>> = args
        .iter()
        .zip(&max_deg)
        .map(|(a, &md)| {
            let mut v = vec![one.clone()];
            for k in 1..=md as usize {
                let next = v[k - 1].mul(a);
                v.push(next);
            }
            v
        })
        .collect();
    for (m, c) in p.terms() {
        let mut term = one.scaled(c);
        for (i, e) in m.iter().enumerate() {
            if e > 0 {
                term = term.mul(&powers[i][e as usize]);
            }
        }
        out.add_assign(&term);
    }
    out
}

/// Determinant of `I + E` for a square matrix of series with vanishing ε⁰
/// terms, via `exp(tr log(I + E))`.
pub(crate) fn det_identity_plus(e: &[Vec<EpsSeries>]) -> EpsSeries {
    let d = e.len();
    let order = e[0][0].order();
    let dim = e[0][0].dim();
    let matmul = |a: &[Vec<EpsSeries>], b: &[Vec<EpsSeries>]| -> Vec<Vec<EpsSeries>> {
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| {
                        let mut acc = EpsSeries::zero(dim, order);
                        for j in 0..d {
                            acc.add_assign(&a[i][j].mul(&b[j][k]));
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    };
    let mut trace_log = EpsSeries::zero(dim, order);
    let mut power: Vec<Vec<EpsSeries>> = e.to_vec();
    for k in 1..=order {
        let mut tr = EpsSeries::zero(dim, order);
        for (i, row) in power.iter().enumerate() {
            tr.add_assign(&row[i]);
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        trace_log.add_assign(&tr.scaled(sign / k as f64));
        if k < order {
            power = matmul(&power, e);
        }
    }
    trace_log.exp()
}
