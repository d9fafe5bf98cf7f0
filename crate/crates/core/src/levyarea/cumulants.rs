use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;

use super::{normalize_to_x, sample_increment, x_dim};
use crate::polyalg::{MultiIndex, Poly};
use crate::streams;

const BATCHES: usize = 20;

/// Joint cumulants of `X` up to an even order, with standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulantExpansion {
    dim: usize,
    order: usize,
    samples: usize,
    entries: BTreeMap<MultiIndex, (f64, f64)>,
}

impl CumulantExpansion {
    /// Builds from explicit `(α, κ_α, se)` triples; missing indices are zero.
    pub fn from_cumulants<I>(dim: usize, order: usize, values: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, f64, f64)>,
    {
        let entries = values
            .into_iter()
            .map(|(m, v, se)| {
                assert_eq!(m.dim(), dim);
                (m, (v, se))
            })
            .collect();
        CumulantExpansion { dim, order, samples: 0, entries }
    }

    /// Closed-form cumulants of `X` for `d = 2` up to order four:
    /// unit covariance, `κ(X₃,X₃,X₃,X₃) = 6/5` and
    /// `κ(X₁,X₁,X₃,X₃) = κ(X₂,X₂,X₃,X₃) = 2/5`, all others zero.
    pub fn planar_fourth_order() -> Self {
        let m = MultiIndex::from_slice;
        Self::from_cumulants(
            3,
            4,
            [
                (m(&[2, 0, 0]), 1.0, 0.0),
                (m(&[0, 2, 0]), 1.0, 0.0),
                (m(&[0, 0, 2]), 1.0, 0.0),
                (m(&[0, 0, 4]), 1.2, 0.0),
                (m(&[2, 0, 2]), 0.4, 0.0),
                (m(&[0, 2, 2]), 0.4, 0.0),
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn cumulant(&self, alpha: &MultiIndex) -> f64 {
        self.entries.get(alpha).map_or(0.0, |e| e.0)
    }

    pub fn std_error(&self, alpha: &MultiIndex) -> f64 {
        self.entries.get(alpha).map_or(0.0, |e| e.1)
    }

    /// `(α, κ_α, se)` for every stored index of total degree `k`.
    pub fn entries_of_order(&self, k: u32) -> impl Iterator<Item = (&MultiIndex, f64, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |(m, _)| m.degree() == k)
            .map(|(m, &(v, se))| (m, v, se))
    }

    /// Degree-`k` part of the cumulant generating function,
    /// `Σ_{|α|=k} κ_α t^α / α!`.
    pub fn cgf_poly(&self, k: u32) -> Poly {
        Poly::from_terms(
            self.dim,
            self.entries_of_order(k).map(|(m, v, _)| (m.clone(), v / m.factorial())),
        )
    }

    /// Degree-`k` part of `log E exp(i z·X)` with the `i^k` folded in, so that
    /// `log ψ(z) = −|z|²/2 + c₄(z) + c₆(z) + …`.
    pub fn char_exponent_poly(&self, k: u32) -> Poly {
        assert!(k.is_multiple_of(2), "only even orders are real");
        let sign = if (k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        self.cgf_poly(k).scaled(sign)
    }

    /// Sets every cumulant of odd order to zero (the law of `X` is symmetric).
    pub fn symmetrized(mut self) -> Self {
        self.entries.retain(|m, _| m.degree() % 2 == 0);
        self
    }

    /// Largest `|κ_α − δ_α|` over order-two entries, `δ` the identity.
    pub fn covariance_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, v, _) in self.entries_of_order(2) {
            let target = if m.iter().any(|e| e == 2) { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        worst
    }
}

/// Samples `M` normalised vectors `X` from the fine-grid oracle (step `h = 1`,
/// which is exact for `X` by Brownian scaling) and estimates their cumulants.
pub fn estimate_cumulants<R: Rng + ?Sized>(
    d: usize,
    order: usize,
    m: usize,
    n_sub: usize,
    rng: &mut R,
) -> CumulantExpansion {
    assert!(order == 4 || order == 6, "order must be 4 or 6");
    let d1 = x_dim(d);
    let seed = streams::derive_seed(rng);
    let chunks = streams::chunks(m);
    let parts: Vec<Vec<f64>> = chunks
        .par_iter()
        .enumerate()
        .map(|(c, &(_, len))| {
            let mut r = streams::stream(seed, c as u64);
            let mut out = Vec::with_capacity(len * d1);
            for _ in 0..len {
                let inc = sample_increment(d, 1.0, n_sub, &mut r);
                out.extend(normalize_to_x(&inc, 1));
            }
            out
        })
        .collect();
    let data: Vec<f64> = parts.concat();
    estimate_cumulants_from_samples(d1, order, &data)
}

/// Cumulant estimates from row-major samples of dimension `dim`.
///
/// Orders 2–4 use the unbiased k-statistics, higher orders the plug-in
/// moment-to-cumulant formula. Standard errors come from the spread of the
/// same estimator over 20 contiguous batches.
pub fn estimate_cumulants_from_samples(dim: usize, order: usize, data: &[f64]) -> CumulantExpansion {
    assert!(dim > 0 && data.len().is_multiple_of(dim));
    let n = data.len() / dim;
    assert!(n >= 4 * BATCHES, "too few samples");
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let table = MonomialTable::new(dim, order as u32);
    let bounds: Vec<(usize, usize)> = (0..BATCHES)
        .map(|b| (b * n / BATCHES, (b + 1) * n / BATCHES))
        .collect();
    let sums: Vec<Vec<f64>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = vec![0.0; table.len()];
            let mut vals = vec![0.0; table.len()];
            for row in data[lo * dim..hi * dim].chunks_exact(dim) {
                table.fill(row, &mean, &mut vals);
                for (a, v) in acc.iter_mut().zip(&vals) {
                    *a += v;
                }
            }
            acc
        })
        .collect();

    let mut total = vec![0.0; table.len()];
    for s in &sums {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    let to_central = |s: &[f64], count: usize| -> Vec<f64> {
        let raw: Vec<f64> = s.iter().map(|v| v / count as f64).collect();
        table.central(&raw)
    };
    let full = to_central(&total, n);
    let batch: Vec<(Vec<f64>, usize)> = sums
        .iter()
        .zip(&bounds)
        .map(|(s, &(lo, hi))| (to_central(s, hi - lo), hi - lo))
        .collect();

    let mut partitions: HashMap<usize, Vec<Vec<Vec<usize>>>> = HashMap::new();
    let mut entries = BTreeMap::new();
    for k in 2..=order as u32 {
        let parts = partitions.entry(k as usize).or_insert_with(|| partitions_without_singletons(k as usize));
        for alpha in MultiIndex::all_of_degree(dim, k) {
            let positions: Vec<usize> =
                alpha.iter().enumerate().flat_map(|(i, e)| std::iter::repeat_n(i, e as usize)).collect();
            let value = cumulant_estimate(&table, &full, n, &positions, parts);
            let ests: Vec<f64> = batch
                .iter()
                .map(|(c, cnt)| cumulant_estimate(&table, c, *cnt, &positions, parts))
                .collect();
            let bm = ests.iter().sum::<f64>() / BATCHES as f64;
            let bv = ests.iter().map(|e| (e - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
            entries.insert(alpha, (value, (bv / BATCHES as f64).sqrt()));
        }
    }
    CumulantExpansion { dim, order, samples: n, entries }
}

/// All monomials of degree 1..=order, each built from a lower one times a
/// single coordinate.
struct MonomialTable {
    dim: usize,
    monos: Vec<MultiIndex>,
    /// `(parent, var)`; the parent is `usize::MAX` for degree one.
    build: Vec<(usize, usize)>,
    index: HashMap<MultiIndex, usize>,
}

impl MonomialTable {
    fn new(dim: usize, order: u32) -> Self {
        let mut monos = Vec::new();
        let mut build = Vec::new();
        let mut index = HashMap::new();
        for i in 0..dim {
            let m = MultiIndex::unit(dim, i);
            index.insert(m.clone(), monos.len());
            monos.push(m);
            build.push((usize::MAX, i));
        }
        let mut prev = 0..dim;
        for _ in 2..=order {
            let start = monos.len();
            for p in prev.clone() {
                let last = (0..dim).rev().find(|&i| monos[p].get(i) > 0).unwrap_or(0);
                for i in last..dim {
                    let m = monos[p].add(&MultiIndex::unit(dim, i));
                    index.insert(m.clone(), monos.len());
                    monos.push(m);
                    build.push((p, i));
                }
            }
            prev = start..monos.len();
        }
        MonomialTable { dim, monos, build, index }
    }

    fn len(&self) -> usize {
        self.monos.len()
    }

    fn fill(&self, row: &[f64], mean: &[f64], vals: &mut [f64]) {
        for (j, &(p, i)) in self.build.iter().enumerate() {
            let x = row[i] - mean[i];
            vals[j] = if p == usize::MAX { x } else { vals[p] * x };
        }
    }

    /// Moments about the sample's own mean from moments about a reference
    /// point, by binomial expansion in the mean shift.
    fn central(&self, raw: &[f64]) -> Vec<f64> {
        let shift: Vec<f64> = (0..self.dim).map(|i| raw[i]).collect();
        self.monos
            .iter()
            .map(|alpha| {
                let mut acc = 0.0;
                for_each_sub_index(alpha, &mut |beta, binom| {
                    let rest: f64 = (0..self.dim)
                        .map(|i| (-shift[i]).powi((alpha.get(i) - beta.get(i)) as i32))
                        .product();
                    let mb = if beta.degree() == 0 { 1.0 } else { raw[self.index[beta]] };
                    acc += binom * rest * mb;
                });
                acc
            })
            .collect()
    }

    fn moment(&self, central: &[f64], positions: &[usize]) -> f64 {
        let mut m = MultiIndex::zeros(self.dim);
        for &p in positions {
            m.set(p, m.get(p) + 1);
        }
        central[self.index[&m]]
    }
}

fn for_each_sub_index(alpha: &MultiIndex, f: &mut dyn FnMut(&MultiIndex, f64)) {
    fn rec(alpha: &MultiIndex, i: usize, beta: &mut MultiIndex, binom: f64, f: &mut dyn FnMut(&MultiIndex, f64)) {
        if i == alpha.dim() {
            f(beta, binom);
            return;
        }
        let a = alpha.get(i);
        let mut c = 1.0;
        for b in 0..=a {
            beta.set(i, b);
            rec(alpha, i + 1, beta, binom * c, f);
            c = c * (a - b) as f64 / (b + 1) as f64;
        }
        beta.set(i, 0);
    }
    let mut beta = MultiIndex::zeros(alpha.dim());
    rec(alpha, 0, &mut beta, 1.0, f);
}

/// Set partitions of `0..k` with every block of size at least two.
fn partitions_without_singletons(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, k: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            if blocks.iter().all(|b| b.len() >= 2) {
                out.push(blocks.clone());
            }
            return;
        }
        for j in 0..blocks.len() {
            blocks[j].push(i);
            rec(i + 1, k, blocks, out);
            blocks[j].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, k, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

fn cumulant_estimate(
    table: &MonomialTable,
    central: &[f64],
    n: usize,
    positions: &[usize],
    partitions: &[Vec<Vec<usize>>],
) -> f64 {
    let nf = n as f64;
    let block_moment = |block: &[usize]| {
        let pos: Vec<usize> = block.iter().map(|&b| positions[b]).collect();
        table.moment(central, &pos)
    };
    match positions.len() {
        2 => nf / (nf - 1.0) * table.moment(central, positions),
        3 => nf * nf / ((nf - 1.0) * (nf - 2.0)) * table.moment(central, positions),
        4 => {
            let pairs: f64 = partitions
                .iter()
                .filter(|p| p.len() == 2)
                .map(|p| block_moment(&p[0]) * block_moment(&p[1]))
                .sum();
            nf * nf / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0))
                * ((nf + 1.0) * table.moment(central, positions) - (nf - 1.0) * pairs)
        }
        _ => partitions
            .iter()
            .map(|p| {
                let b = p.len();
                let weight = (1..b).map(|j| j as f64).product::<f64>()
                    * if b % 2 == 1 { 1.0 } else { -1.0 };
                weight * p.iter().map(|blk| block_moment(blk)).product::<f64>()
            })
            .sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    #[test]
    fn partition_counts() {
        assert_eq!(partitions_without_singletons(2).len(), 1);
        assert_eq!(partitions_without_singletons(3).len(), 1);
        assert_eq!(partitions_without_singletons(4).len(), 4);
        assert_eq!(partitions_without_singletons(6).len(), 41);
    }

    #[test]
    fn gaussian_cumulants_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..2 * 200_000).map(|_| rng.sample(StandardNormal)).collect();
        let c = estimate_cumulants_from_samples(2, 6, &data);
        for k in 3..=6 {
            for (m, v, se) in c.entries_of_order(k) {
                assert!(v.abs() < 5.0 * se + 1e-3, "{m:?}: {v} ± {se}");
            }
        }
        assert!(c.covariance_deviation() < 0.02);
    }

    #[test]
    fn exponential_cumulants() {
        // Exp(1): κ_k = (k−1)!.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e = Exp::new(1.0).unwrap();
        let data: Vec<f64> = (0..400_000).map(|_| e.sample(&mut rng)).collect();
        let c = estimate_cumulants_from_samples(1, 4, &data);
        for (k, target) in [(2u32, 1.0), (3, 2.0), (4, 6.0)] {
            let m = MultiIndex::from_slice(&[k]);
            let (v, se) = (c.cumulant(&m), c.std_error(&m));
            assert!((v - target).abs() < 4.0 * se, "order {k}: {v} ± {se}");
        }
    }

    #[test]
    fn small_sample_k_statistic_is_exact() {
        // Unbiased k2 of {0,1,2,3,...} equals the sample variance.
        let data: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let c = estimate_cumulants_from_samples(1, 4, &data);
        let mean = data.iter().sum::<f64>() / 100.0;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0;
        assert!((c.cumulant(&MultiIndex::from_slice(&[2])) - var).abs() < 1e-12);
    }

    #[test]
    fn char_exponent_signs() {
        let c = CumulantExpansion::planar_fourth_order();
        let c4 = c.char_exponent_poly(4);
        assert!((c4.coeff(&MultiIndex::from_slice(&[0, 0, 4])) - 1.2 / 24.0).abs() < 1e-15);
        assert!((c4.coeff(&MultiIndex::from_slice(&[2, 0, 2])) - 0.4 / 4.0).abs() < 1e-15);
        let c2 = c.char_exponent_poly(2);
        assert!((c2.coeff(&MultiIndex::from_slice(&[2, 0, 0])) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_matches_planar_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = estimate_cumulants(2, 4, 100_000, 256, &mut rng);
        let exact = CumulantExpansion::planar_fourth_order();
        for k in [2u32, 3, 4] {
            for (m, v, se) in c.entries_of_order(k) {
                let target = exact.cumulant(m);
                assert!((v - target).abs() < 4.0 * se + 0.01, "{m:?}: {v} ± {se} vs {target}");
            }
        }
    }
}
