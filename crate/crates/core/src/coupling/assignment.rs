use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::matrices::{conditional_matrices, sym_root};
use super::tree::{finish, CoupledTree, FallbackCounts, PreparedTree};
use super::{CouplingError, DyadicSet, Fallback, GuardConfig};
use crate::levyarea::pair_count;
use crate::streams;
use crate::wasserstein::solve_assignment;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Matches `residuals` (each of length `d2`) to fresh standard normal draws
/// by minimising `Σ |u_i − ξ_σ(i)|_∞²`; returns the matched draws.
fn match_to_normals(residuals: &[DVector<f64>], d2: usize, seed: u64, stream: u64) -> Vec<DVector<f64>> {
    let n = residuals.len();
    let mut rng = streams::stream(seed, stream);
    let draws: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_iterator(d2, (0..d2).map(|_| rng.sample::<f64, _>(StandardNormal))))
        .collect();
    let mut cost = vec![0.0; n * n];
    for (i, u) in residuals.iter().enumerate() {
        for (j, xi) in draws.iter().enumerate() {
            cost[i * n + j] = (u - xi).amax().powi(2);
        }
    }
    let (perm, _) = solve_assignment(&cost, n);
    perm.into_iter().map(|j| draws[j].clone()).collect()
}

fn stream_id(level_tag: u64, bin: usize) -> u64 {
    (level_tag << 32) | bin as u64
}

/// Couples a batch of walks level by level, pooling whitened residuals of
/// all walks at a level, sorting them by the whitened parent value, and
/// matching each bin of `bin` residuals to as many fresh Gaussian draws.
pub fn couple_batch_assignment(
    trees: &[PreparedTree],
    guards: &GuardConfig,
    seed: u64,
    bin: usize,
) -> Result<Vec<CoupledTree>, CouplingError> {
    guards.validate()?;
    assert!(bin >= 1);
    let Some(first) = trees.first() else {
        return Ok(Vec::new());
    };
    let (m, d) = (first.m, first.d);
    assert!(trees.iter().all(|t| t.m == m && t.d == d), "batch must share m and d");
    let d2 = pair_count(d);
    let mut z: Vec<Vec<Vec<DVector<f64>>>> = trees
        .iter()
        .map(|_| (0..=m).map(|n| vec![DVector::zeros(d2); 1 << (m - n)]).collect())
        .collect();
    let mut counts = vec![FallbackCounts::default(); trees.len()];

    let root = DyadicSet::root(m);
    let roots = trees.iter().map(|t| sym_root(t.h(root))).collect::<Result<Vec<_>, _>>()?;
    let whitened: Vec<DVector<f64>> =
        trees.iter().zip(&roots).map(|(t, r)| &r.inv_sqrt * t.y(root)).collect();
    let matched: Vec<Vec<DVector<f64>>> = whitened
        .par_chunks(bin)
        .enumerate()
        .map(|(b, chunk)| match_to_normals(chunk, d2, seed, stream_id(m as u64 + 1, b)))
        .collect();
    for (t, zw) in matched.into_iter().flatten().enumerate() {
        z[t][m as usize][0] = &roots[t].sqrt * zw;
        counts[t].record(None);
    }

    for n in (1..=m).rev() {
        struct Item {
            tree: usize,
            node: DyadicSet,
            key: f64,
            u: DVector<f64>,
            j: nalgebra::DMatrix<f64>,
            h_sqrt: nalgebra::DMatrix<f64>,
        }
        let mut items: Vec<Item> = Vec::new();
        for (t, prep) in trees.iter().enumerate() {
            for k in 0..(1usize << (m - n)) {
                let e = DyadicSet { m, n, k };
                let (f, g) = e.children();
                let (j, h) = conditional_matrices(prep.h(e), prep.h(f), prep.h(g))?;
                let h_root = sym_root(&h)?;
                let e_root = sym_root(prep.h(e))?;
                let key = (&e_root.inv_sqrt * prep.y(e))[0];
                let u = &h_root.inv_sqrt * (prep.y(f) - &j * prep.y(e));
                items.push(Item { tree: t, node: e, key, u, j, h_sqrt: h_root.sqrt });
            }
        }
        items.sort_by(|a, b| a.key.total_cmp(&b.key).then(a.tree.cmp(&b.tree)).then(a.node.k.cmp(&b.node.k)));
        let residuals: Vec<DVector<f64>> = items.iter().map(|it| it.u.clone()).collect();
        let matched: Vec<DVector<f64>> = residuals
            .par_chunks(bin)
            .enumerate()
            .map(|(b, chunk)| match_to_normals(chunk, d2, seed, stream_id(n as u64, b)))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        for (it, xi) in items.iter().zip(matched) {
            let prep = &trees[it.tree];
            let e = it.node;
            let (f, g) = e.children();
            let y_e = prep.y(e);
            let z_e = z[it.tree][n as usize][e.k].clone();
            let z_star = &it.j * y_e + &it.h_sqrt * xi;
            let z_f = z_star + &it.j * (&z_e - y_e);
            let z_g = &z_e * SQRT2 - &z_f;
            z[it.tree][f.n as usize][f.k] = z_f;
            z[it.tree][g.n as usize][g.k] = z_g;
            counts[it.tree].record(None);
        }
    }

    Ok(trees
        .iter()
        .zip(z)
        .zip(counts)
        .map(|((prep, zt), c)| {
            let flags: Vec<Vec<Option<Fallback>>> = (0..=m).map(|n| vec![None; 1 << (m - n)]).collect();
            finish(prep, zt, flags, c)
        })
        .collect())
}
