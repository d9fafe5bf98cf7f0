use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::edgeworth::EdgeworthModel;
use super::matrices::{build_g, conditional_matrices, g_norm_sq, sym_root};
use super::{CouplingError, DyadicSet, Fallback, GuardConfig, SubCoupler};
use crate::levyarea::{normalize_to_x, pair_count, sample_increment, x_dim};
use crate::polyalg::Poly;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Simulated increments of one walk of `N = 2^m` steps of length `1/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSample {
    pub m: u32,
    pub d: usize,
    /// `N × d`, row-major.
    pub w: Vec<f64>,
    /// `N × d₁`, the normalised `X_r`.
    pub x: Vec<f64>,
    /// `N × d₂`, the Lévy areas `A_r`.
    pub a: Vec<f64>,
}

impl TreeSample {
    pub fn steps(&self) -> usize {
        1 << self.m
    }

    pub fn w_row(&self, r: usize) -> &[f64] {
        &self.w[r * self.d..(r + 1) * self.d]
    }

    pub fn x_row(&self, r: usize) -> &[f64] {
        let d1 = x_dim(self.d);
        &self.x[r * d1..(r + 1) * d1]
    }
}

pub fn simulate_tree<R: Rng + ?Sized>(m: u32, d: usize, n_sub: usize, rng: &mut R) -> TreeSample {
    let n = 1usize << m;
    let h = 1.0 / n as f64;
    let mut w = Vec::with_capacity(n * d);
    let mut x = Vec::with_capacity(n * x_dim(d));
    let mut a = Vec::with_capacity(n * pair_count(d));
    for _ in 0..n {
        let inc = sample_increment(d, h, n_sub, rng);
        x.extend(normalize_to_x(&inc, n));
        w.extend_from_slice(&inc.w);
        a.extend_from_slice(&inc.a);
    }
    TreeSample { m, d, w, x, a }
}

#[derive(Clone, Debug)]
pub(crate) struct NodeData {
    pub y: DVector<f64>,
    pub h: DMatrix<f64>,
    /// Largest `‖G_r‖₂` over the node.
    pub g_max: f64,
    /// Sums over the node of `c_{X,k}(G_rᵗ t)`, one per kept order.
    pub polys: Vec<Poly>,
}

/// Per-node aggregates `Y_E`, `H_E` of a simulated walk.
#[derive(Clone, Debug)]
pub struct PreparedTree {
    pub m: u32,
    pub d: usize,
    pub(crate) levels: Vec<Vec<NodeData>>,
    pub g: Vec<DMatrix<f64>>,
}

impl PreparedTree {
    pub fn new(sample: &TreeSample, model: Option<&EdgeworthModel>) -> Self {
        let n = sample.steps();
        let g: Vec<DMatrix<f64>> = (0..n).map(|r| build_g(sample.w_row(r), n)).collect();
        let leaves: Vec<NodeData> = (0..n)
            .map(|r| {
                let x = DVector::from_column_slice(sample.x_row(r));
                NodeData {
                    y: &g[r] * x,
                    h: &g[r] * g[r].transpose(),
                    g_max: g_norm_sq(&g[r]).sqrt(),
                    polys: model.map(|md| md.leaf_polys(&g[r])).unwrap_or_default(),
                }
            })
            .collect();
        let mut levels = vec![leaves];
        for _ in 0..sample.m {
            let below = levels.last().expect("at least the leaves");
            let next: Vec<NodeData> = below
                .chunks_exact(2)
                .map(|pair| {
                    let (f, g) = (&pair[0], &pair[1]);
                    NodeData {
                        y: (&f.y + &g.y) / SQRT2,
                        h: (&f.h + &g.h) * 0.5,
                        g_max: f.g_max.max(g.g_max),
                        polys: f.polys.iter().zip(&g.polys).map(|(a, b)| a + b).collect(),
                    }
                })
                .collect();
            levels.push(next);
        }
        PreparedTree { m: sample.m, d: sample.d, levels, g }
    }

    pub(crate) fn node(&self, e: DyadicSet) -> &NodeData {
        &self.levels[e.n as usize][e.k]
    }

    pub fn y(&self, e: DyadicSet) -> &DVector<f64> {
        &self.node(e).y
    }

    pub fn h(&self, e: DyadicSet) -> &DMatrix<f64> {
        &self.node(e).h
    }
}

/// Number of coupling decisions and of fallbacks by cause.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FallbackCounts {
    pub decisions: usize,
    pub guard_norm: usize,
    pub residual_cap: usize,
    pub no_convergence: usize,
    pub numerical: usize,
}

impl FallbackCounts {
    pub fn record(&mut self, outcome: Option<Fallback>) {
        self.decisions += 1;
        match outcome {
            None => {}
            Some(Fallback::GuardNorm) => self.guard_norm += 1,
            Some(Fallback::ResidualCap) => self.residual_cap += 1,
            Some(Fallback::NoConvergence) => self.no_convergence += 1,
            Some(Fallback::Numerical) => self.numerical += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.guard_norm + self.residual_cap + self.no_convergence + self.numerical
    }

    pub fn rate(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.total() as f64 / self.decisions as f64
        }
    }

    pub fn merge(&mut self, other: &FallbackCounts) {
        self.decisions += other.decisions;
        self.guard_norm += other.guard_norm;
        self.residual_cap += other.residual_cap;
        self.no_convergence += other.no_convergence;
        self.numerical += other.numerical;
    }
}

/// A walk and its Gaussian partner built on the same increments.
#[derive(Clone, Debug)]
pub struct CoupledTree {
    pub m: u32,
    pub d: usize,
    /// `N × d₂` true Lévy areas.
    pub a: Vec<f64>,
    /// `N × d₂` surrogate increments `B_r = Z_r / N`.
    pub b: Vec<f64>,
    /// `Z_E` for every node, indexed `[level][offset]`.
    pub z: Vec<Vec<DVector<f64>>>,
    /// Fallback that fired when `Z` at the node was produced; the root's
    /// entry belongs to the root step, every other to the node as first or
    /// second child.
    pub flags: Vec<Vec<Option<Fallback>>>,
    pub counts: FallbackCounts,
}

impl CoupledTree {
    pub fn z_at(&self, e: DyadicSet) -> &DVector<f64> {
        &self.z[e.n as usize][e.k]
    }

    pub fn max_deviation(&self) -> f64 {
        max_partial_sum_deviation(&self.a, &self.b, pair_count(self.d))
    }
}

fn normals<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DVector<f64> {
    DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn sup(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Whitened Edgeworth transport at the root; `None` means fall back.
fn edgeworth_root(
    prep: &PreparedTree,
    model: &EdgeworthModel,
    guards: &GuardConfig,
    inv_sqrt: &DMatrix<f64>,
) -> Result<DVector<f64>, Fallback> {
    let m = prep.m;
    let data = prep.node(DyadicSet::root(m));
    if data.g_max > guards.norm_cap(m) {
        return Err(Fallback::GuardNorm);
    }
    let w = inv_sqrt * &data.y;
    if sup(&w) > guards.residual_cap {
        return Err(Fallback::ResidualCap);
    }
    let l = inv_sqrt * 2f64.powf(-(m as f64) / 2.0);
    let parts: Vec<Poly> = data.polys.iter().map(|p| p.compose_linear(&l)).collect();
    let eps = 2f64.powf(-(m.max(1) as f64) / 2.0);
    let z = model.transport(&parts, None, eps, w.as_slice())?;
    Ok(DVector::from_vec(z))
}

struct ChildMatrices {
    j: DMatrix<f64>,
    h_sqrt: DMatrix<f64>,
    h_inv_sqrt: DMatrix<f64>,
}

fn child_matrices(prep: &PreparedTree, e: DyadicSet) -> Result<ChildMatrices, CouplingError> {
    let (f, g) = e.children();
    let (j, h) = conditional_matrices(prep.h(e), prep.h(f), prep.h(g))?;
    let root = sym_root(&h)?;
    Ok(ChildMatrices { j, h_sqrt: root.sqrt, h_inv_sqrt: root.inv_sqrt })
}

/// Whitened Edgeworth transport of `u = H^{-1/2}(Y_F − J Y_E)` given
/// `ω = H_E^{-1/2} Y_E`.
fn edgeworth_child(
    prep: &PreparedTree,
    model: &EdgeworthModel,
    guards: &GuardConfig,
    e: DyadicSet,
    mats: &ChildMatrices,
) -> Result<DVector<f64>, Fallback> {
    let (f, g) = e.children();
    let data = prep.node(e);
    if data.g_max > guards.norm_cap(e.n) {
        return Err(Fallback::GuardNorm);
    }
    let u = &mats.h_inv_sqrt * (prep.y(f) - &mats.j * &data.y);
    if sup(&u) > guards.residual_cap {
        return Err(Fallback::ResidualCap);
    }
    let e_root = sym_root(&data.h).map_err(|_| Fallback::Numerical)?;
    let omega = &e_root.inv_sqrt * &data.y;
    let d2 = data.y.len();
    let s = 2f64.powf(-(e.n as f64) / 2.0);
    let top = &e_root.inv_sqrt * s;
    let mut l_f = DMatrix::zeros(2 * d2, d2);
    let mut l_g = DMatrix::zeros(2 * d2, d2);
    l_f.view_mut((0, 0), (d2, d2)).copy_from(&top);
    l_g.view_mut((0, 0), (d2, d2)).copy_from(&top);
    let ident = DMatrix::<f64>::identity(d2, d2);
    let lower_f = &mats.h_inv_sqrt * (ident * (SQRT2 * s) - &mats.j * s);
    let lower_g = &mats.h_inv_sqrt * &mats.j * (-s);
    l_f.view_mut((d2, 0), (d2, d2)).copy_from(&lower_f);
    l_g.view_mut((d2, 0), (d2, d2)).copy_from(&lower_g);
    let (lf_t, lg_t) = (l_f.transpose(), l_g.transpose());
    let (pf, pg) = (&prep.node(f).polys, &prep.node(g).polys);
    let parts: Vec<Poly> = pf
        .iter()
        .zip(pg)
        .map(|(a, b)| &a.compose_linear(&lf_t) + &b.compose_linear(&lg_t))
        .collect();
    let z = model.transport(&parts, Some(omega.as_slice()), s, u.as_slice())?;
    Ok(DVector::from_vec(z))
}

/// Builds the Gaussian side of one prepared walk, depth-first from the root.
///
/// The assignment sub-coupler pools nodes across walks and is handled by
/// [`super::couple_batch_assignment`]; here it is run on a batch of one.
pub fn couple_tree<R: Rng + ?Sized>(
    prep: &PreparedTree,
    kind: SubCoupler,
    guards: &GuardConfig,
    model: Option<&EdgeworthModel>,
    rng: &mut R,
) -> Result<CoupledTree, CouplingError> {
    if kind == SubCoupler::Assignment {
        let seed = rng.random();
        let mut out = super::couple_batch_assignment(std::slice::from_ref(prep), guards, seed, 64)?;
        return Ok(out.pop().expect("one tree in, one out"));
    }
    let model = match kind {
        SubCoupler::Edgeworth => Some(model.ok_or(CouplingError::MissingModel)?),
        _ => None,
    };
    let m = prep.m;
    let d2 = pair_count(prep.d);
    let mut z: Vec<Vec<DVector<f64>>> =
        (0..=m).map(|n| vec![DVector::zeros(d2); 1 << (m - n)]).collect();
    let mut flags: Vec<Vec<Option<Fallback>>> = (0..=m).map(|n| vec![None; 1 << (m - n)]).collect();
    let mut counts = FallbackCounts::default();

    let root = DyadicSet::root(m);
    let h_root = sym_root(prep.h(root))?;
    let (zw, flag) = match model.map(|md| edgeworth_root(prep, md, guards, &h_root.inv_sqrt)) {
        Some(Ok(zw)) => (zw, None),
        Some(Err(fb)) => (normals(rng, d2), Some(fb)),
        None => (normals(rng, d2), None),
    };
    if model.is_some() {
        counts.record(flag);
    }
    let z_root = &h_root.sqrt * zw;
    z[m as usize][0] = z_root;
    flags[m as usize][0] = flag;

    let mut stack = vec![root];
    while let Some(e) = stack.pop() {
        if e.is_leaf() {
            continue;
        }
        let (f, g) = e.children();
        let mats = child_matrices(prep, e)?;
        let y_e = prep.y(e);
        let (u, flag) = match model.map(|md| edgeworth_child(prep, md, guards, e, &mats)) {
            Some(Ok(u)) => (u, None),
            Some(Err(fb)) => (normals(rng, d2), Some(fb)),
            None => (normals(rng, d2), None),
        };
        if model.is_some() {
            counts.record(flag);
        }
        let z_star = &mats.j * y_e + &mats.h_sqrt * u;
        let z_e = z[e.n as usize][e.k].clone();
        let z_f = z_star + &mats.j * (&z_e - y_e);
        let z_g = &z_e * SQRT2 - &z_f;
        z[f.n as usize][f.k] = z_f;
        z[g.n as usize][g.k] = z_g;
        flags[f.n as usize][f.k] = flag;
        flags[g.n as usize][g.k] = flag;
        // Depth-first, first child first.
        stack.push(g);
        stack.push(f);
    }
    Ok(finish(prep, z, flags, counts))
}

pub(crate) fn finish(
    prep: &PreparedTree,
    z: Vec<Vec<DVector<f64>>>,
    flags: Vec<Vec<Option<Fallback>>>,
    counts: FallbackCounts,
) -> CoupledTree {
    let n = 1usize << prep.m;
    let nf = n as f64;
    let b: Vec<f64> = z[0].iter().flat_map(|v| v.iter().map(|x| x / nf).collect::<Vec<_>>()).collect();
    let a: Vec<f64> = prep.levels[0]
        .iter()
        .flat_map(|node| node.y.iter().map(|x| x / nf).collect::<Vec<_>>())
        .collect();
    CoupledTree { m: prep.m, d: prep.d, a, b, z, flags, counts }
}

/// Simulates a walk and couples it in one call, drawing from one generator.
pub fn run_coupled_walk<R: Rng + ?Sized>(
    m: u32,
    d: usize,
    kind: SubCoupler,
    guards: &GuardConfig,
    model: Option<&EdgeworthModel>,
    n_sub: usize,
    rng: &mut R,
) -> Result<CoupledTree, CouplingError> {
    if d < 2 {
        return Err(CouplingError::BadDimension(d));
    }
    guards.validate()?;
    let sample = simulate_tree(m, d, n_sub, rng);
    let prep = PreparedTree::new(&sample, model);
    let mut tree = couple_tree(&prep, kind, guards, model, rng)?;
    // Report the oracle's own areas; they agree with G X / N to rounding.
    tree.a = sample.a;
    Ok(tree)
}

/// `S_r = Σ_{j<r} (A_j − B_j)` for `r = 1..N`, row-major `N × d₂`.
pub fn partial_sums(a: &[f64], b: &[f64], d2: usize) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    let mut acc = vec![0.0; d2];
    let mut out = Vec::with_capacity(a.len());
    for (ra, rb) in a.chunks_exact(d2).zip(b.chunks_exact(d2)) {
        for i in 0..d2 {
            acc[i] += ra[i] - rb[i];
        }
        out.extend_from_slice(&acc);
    }
    out
}

/// `max_r |S_r|_∞`.
pub fn max_partial_sum_deviation(a: &[f64], b: &[f64], d2: usize) -> f64 {
    partial_sums(a, b, d2).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

/// `((1/M) Σ D_i^p)^{1/p}` over per-walk maximal deviations, with a bootstrap
/// standard error from a fixed-seed resampling.
pub fn coupling_error(max_devs: &[f64], p: f64) -> (f64, f64) {
    assert!(!max_devs.is_empty() && p >= 1.0);
    let n = max_devs.len();
    let est = |idx: &mut dyn Iterator<Item = usize>| {
        let s: f64 = idx.map(|i| max_devs[i].powf(p)).sum();
        (s / n as f64).powf(1.0 / p)
    };
    let value = est(&mut (0..n));
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            est(&mut idx.into_iter())
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
    (value, var.sqrt())
}

/// CSV rows `r, S_r components, fallback code of the step producing leaf
/// r−1` (0 when none fired).
pub fn write_trajectory_csv<W: Write>(tree: &CoupledTree, out: W) -> csv::Result<()> {
    let d2 = pair_count(tree.d);
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["r".to_string()];
    header.extend((1..=d2).map(|i| format!("S{i}")));
    header.push("fallback".into());
    wtr.write_record(&header)?;
    let sums = partial_sums(&tree.a, &tree.b, d2);
    for (r, row) in sums.chunks_exact(d2).enumerate() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(row.iter().map(|v| format!("{v:e}")));
        rec.push(tree.flags[0][r].map_or(0, Fallback::code).to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levyarea::CumulantExpansion;

    fn planar_model() -> EdgeworthModel {
        EdgeworthModel::new(&CumulantExpansion::planar_fourth_order(), 4)
    }

    #[test]
    fn aggregation_and_closing_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = planar_model();
        for d in [2usize, 3] {
            let sample = simulate_tree(4, d, 32, &mut rng);
            let prep = PreparedTree::new(&sample, if d == 2 { Some(&model) } else { None });
            let kind = if d == 2 { SubCoupler::Edgeworth } else { SubCoupler::Independent };
            let tree = couple_tree(&prep, kind, &GuardConfig::default(), Some(&model), &mut rng).unwrap();
            for n in 1..=4u32 {
                for k in 0..(1usize << (4 - n)) {
                    let e = DyadicSet::new(4, n, k).unwrap();
                    let (f, g) = e.children();
                    let dy = (prep.y(f) + prep.y(g)) / SQRT2 - prep.y(e);
                    let dz = (tree.z_at(f) + tree.z_at(g)) / SQRT2 - tree.z_at(e);
                    assert!(dy.amax() < 1e-12 && dz.amax() < 1e-12);
                }
            }
            // Leaf identity: stored areas equal G X / N.
            for (u, v) in tree.a.iter().zip(&sample.a) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_step_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree =
            run_coupled_walk(0, 2, SubCoupler::Independent, &GuardConfig::default(), None, 16, &mut rng)
                .unwrap();
        assert_eq!(tree.a.len(), 1);
        assert!((tree.max_deviation() - (tree.a[0] - tree.b[0]).abs()).abs() < 1e-15);
    }

    #[test]
    fn translation_vanishes_when_sides_agree() {
        // With Z_E = Y_E and Z_F* = Y_F the recursion reproduces Y exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sample = simulate_tree(3, 2, 16, &mut rng);
        let prep = PreparedTree::new(&sample, None);
        let e = DyadicSet::root(3);
        let (f, _) = e.children();
        let mats = child_matrices(&prep, e).unwrap();
        let z_star = prep.y(f).clone();
        let z_f = &z_star + &mats.j * (prep.y(e) - prep.y(e));
        let z_g = prep.y(e) * SQRT2 - &z_f;
        assert!((z_f - prep.y(f)).amax() < 1e-15);
        assert!((z_g - prep.y(e.children().1)).amax() < 1e-12);
    }

    #[test]
    fn coupling_error_examples() {
        let (v, se) = coupling_error(&[0.0; 100], 2.0);
        assert_eq!((v, se), (0.0, 0.0));
        let devs: Vec<f64> = (0..200).map(|i| (i % 13) as f64 * 0.1).collect();
        let (e1, _) = coupling_error(&devs, 1.0);
        let (e2, s2) = coupling_error(&devs, 2.0);
        assert!(e1 <= e2 && s2 > 0.0);
        let a = [0.3, -0.1];
        let b = [0.1, 0.2];
        assert!((max_partial_sum_deviation(&a, &b, 2) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn trajectory_csv_has_one_row_per_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tree =
            run_coupled_walk(2, 3, SubCoupler::Independent, &GuardConfig::default(), None, 8, &mut rng)
                .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&tree, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("r,S1,S2,S3,fallback"));
    }
}
