//! Brownian increments with their Lévy areas, simulated on a fine grid, the
//! split `A = ζ∧W + K`, the Gaussian quadratic surrogate `B = z∧W + λ`, and
//! cumulants of the normalised vector `X = (√(12N) ζ, √12 N K)`.

mod cumulants;

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

pub use cumulants::{estimate_cumulants, estimate_cumulants_from_samples, CumulantExpansion};

/// Number of unordered pairs `k < l` among `d` coordinates.
pub fn pair_count(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Length of `X`: `d + d(d−1)/2 = d(d+1)/2`.
pub fn x_dim(d: usize) -> usize {
    d + pair_count(d)
}

/// Position of the pair `(k, l)`, `k < l`, in lexicographic order (0-based).
pub fn pair_index(d: usize, k: usize, l: usize) -> usize {
    assert!(k < l && l < d, "pair ({k}, {l}) is not ordered within dimension {d}");
    k * (2 * d - k - 1) / 2 + (l - k - 1)
}

/// All pairs `(k, l)`, `k < l`, in lexicographic order.
pub fn pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |k| ((k + 1)..d).map(move |l| (k, l)))
}

/// `(a∧b)_{kl} = a_k b_l − a_l b_k` packed lexicographically.
pub fn wedge(a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    pairs(d).map(|(k, l)| a[k] * b[l] - a[l] * b[k]).collect()
}

/// Brownian positions on the grid `t_i = i h / n_sub`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FinePath {
    pub d: usize,
    pub h: f64,
    pub n_sub: usize,
    values: Vec<f64>,
}

impl FinePath {
    /// Builds a path from its `n_sub` increments (row-major, `n_sub × d`).
    pub fn from_increments(d: usize, h: f64, increments: &[f64]) -> Self {
        assert!(d > 0 && increments.len().is_multiple_of(d));
        let n_sub = increments.len() / d;
        let mut values = vec![0.0; (n_sub + 1) * d];
        for i in 0..n_sub {
            for k in 0..d {
                values[(i + 1) * d + k] = values[i * d + k] + increments[i * d + k];
            }
        }
        FinePath { d, h, n_sub, values }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn endpoint(&self) -> &[f64] {
        self.point(self.n_sub)
    }
}

pub fn simulate_fine_increment<R: Rng + ?Sized>(
    d: usize,
    h: f64,
    n_sub: usize,
    rng: &mut R,
) -> FinePath {
    assert!(n_sub >= 2 && h > 0.0);
    let sd = (h / n_sub as f64).sqrt();
    let incs: Vec<f64> = (0..n_sub * d)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    FinePath::from_increments(d, h, &incs)
}

/// Left-point sums for `A_{kl} = ½∫(W_k dW_l − W_l dW_k)`.
pub fn area_from_path(path: &FinePath) -> Vec<f64> {
    let d = path.d;
    let mut a = vec![0.0; pair_count(d)];
    for i in 0..path.n_sub {
        let w = path.point(i);
        let next = path.point(i + 1);
        for (slot, (k, l)) in a.iter_mut().zip(pairs(d)) {
            let dk = next[k] - w[k];
            let dl = next[l] - w[l];
            *slot += 0.5 * (w[k] * dl - w[l] * dk);
        }
    }
    a
}

/// One step's increment `W`, the bridge means `ζ`, the residual areas `K` and
/// the Lévy areas `A = ζ∧W + K`.
#[derive(Clone, Debug, PartialEq)]
pub struct AreaIncrement {
    pub w: Vec<f64>,
    pub zeta: Vec<f64>,
    pub k: Vec<f64>,
    pub a: Vec<f64>,
}

impl AreaIncrement {
    pub fn d(&self) -> usize {
        self.w.len()
    }

    /// `max |A − ζ∧W − K|`.
    pub fn decomposition_residual(&self) -> f64 {
        let zw = wedge(&self.zeta, &self.w);
        self.a
            .iter()
            .zip(zw.iter().zip(&self.k))
            .map(|(a, (z, k))| (a - z - k).abs())
            .fold(0.0, f64::max)
    }
}

/// `ζ_k = h⁻¹∫W_k dt − W_k(h)/2` by the trapezoid rule, `K` as the residual.
pub fn decompose(path: &FinePath) -> AreaIncrement {
    let d = path.d;
    let a = area_from_path(path);
    let w = path.endpoint().to_vec();
    let mut integral = vec![0.0; d];
    for i in 0..path.n_sub {
        let (p, q) = (path.point(i), path.point(i + 1));
        for k in 0..d {
            integral[k] += 0.5 * (p[k] + q[k]);
        }
    }
    let zeta: Vec<f64> =
        (0..d).map(|k| integral[k] / path.n_sub as f64 - 0.5 * w[k]).collect();
    let zw = wedge(&zeta, &w);
    let k = a.iter().zip(&zw).map(|(a, z)| a - z).collect();
    AreaIncrement { w, zeta, k, a }
}

/// Same draws and arithmetic as `decompose(&simulate_fine_increment(..))`
/// without storing the path.
pub fn sample_increment<R: Rng + ?Sized>(
    d: usize,
    h: f64,
    n_sub: usize,
    rng: &mut R,
) -> AreaIncrement {
    assert!(n_sub >= 2 && h > 0.0);
    let sd = (h / n_sub as f64).sqrt();
    let np = pair_count(d);
    let mut w = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut a = vec![0.0; np];
    let mut integral = vec![0.0; d];
    for _ in 0..n_sub {
        for k in 0..d {
            next[k] = w[k] + sd * rng.sample::<f64, _>(StandardNormal);
        }
        for (slot, (k, l)) in a.iter_mut().zip(pairs(d)) {
            let dk = next[k] - w[k];
            let dl = next[l] - w[l];
            *slot += 0.5 * (w[k] * dl - w[l] * dk);
        }
        for k in 0..d {
            integral[k] += 0.5 * (w[k] + next[k]);
        }
        std::mem::swap(&mut w, &mut next);
    }
    let zeta: Vec<f64> = (0..d).map(|k| integral[k] / n_sub as f64 - 0.5 * w[k]).collect();
    let zw = wedge(&zeta, &w);
    let k = a.iter().zip(&zw).map(|(a, z)| a - z).collect();
    AreaIncrement { w, zeta, k, a }
}

/// `B = z∧W + λ` with `z ~ N(0, I/(12N))`, `λ ~ N(0, I/(12N²))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn sample_surrogate<R: Rng + ?Sized>(d: usize, n: usize, w: &[f64], rng: &mut R) -> Surrogate {
    assert!(n >= 1);
    assert_eq!(w.len(), d);
    let nf = n as f64;
    let sz = (1.0 / (12.0 * nf)).sqrt();
    let sl = (1.0 / 12.0f64).sqrt() / nf;
    let z: Vec<f64> = (0..d).map(|_| sz * rng.sample::<f64, _>(StandardNormal)).collect();
    let lambda: Vec<f64> =
        (0..pair_count(d)).map(|_| sl * rng.sample::<f64, _>(StandardNormal)).collect();
    let b = wedge(&z, w).iter().zip(&lambda).map(|(a, l)| a + l).collect();
    Surrogate { w: w.to_vec(), z, lambda, b }
}

/// `X = (√(12N) ζ, √12 N K)` for an increment over a step of length `1/N`.
pub fn normalize_to_x(inc: &AreaIncrement, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let s1 = (12.0 * nf).sqrt();
    let s2 = 12.0f64.sqrt() * nf;
    inc.zeta.iter().map(|z| s1 * z).chain(inc.k.iter().map(|k| s2 * k)).collect()
}

/// Writes increments as CSV with columns `W*, zeta*, K*, A*`.
pub fn write_increments_csv<W: Write>(out: W, incs: &[AreaIncrement]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    if let Some(first) = incs.first() {
        let d = first.d();
        let mut header: Vec<String> = Vec::new();
        header.extend((1..=d).map(|k| format!("W{k}")));
        header.extend((1..=d).map(|k| format!("zeta{k}")));
        header.extend(pairs(d).map(|(k, l)| format!("K{}{}", k + 1, l + 1)));
        header.extend(pairs(d).map(|(k, l)| format!("A{}{}", k + 1, l + 1)));
        wtr.write_record(&header)?;
    }
    for inc in incs {
        let row: Vec<String> = inc
            .w
            .iter()
            .chain(&inc.zeta)
            .chain(&inc.k)
            .chain(&inc.a)
            .map(|v| format!("{v:e}"))
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
