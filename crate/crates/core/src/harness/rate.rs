use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{CumulantSource, ExperimentConfig};
use super::fit::{fit_rate, RatePoint};
use super::report::{PlotRow, Report, Verdict};
use super::stats::{fourth_cumulant, mean_se};
use super::HarnessError;
use super::experiments::K_SE;
use crate::coupling::{
    couple_batch_assignment, couple_tree, coupling_error, simulate_tree, sym_root, CoupledTree, DyadicSet,
    EdgeworthModel, FallbackCounts, PreparedTree, SubCoupler,
};
use crate::levyarea::{estimate_cumulants, pair_count, CumulantExpansion};
use crate::streams;

pub const INDEPENDENT_SLOPE: (f64, f64) = (-0.6, -0.4);
pub const COUPLED_SLOPE_MAX: f64 = -0.75;
pub const SLOPE_STDERR_MAX: f64 = 0.05;
const ASSIGNMENT_BIN: usize = 64;

pub(crate) fn build_model(cfg: &ExperimentConfig) -> EdgeworthModel {
    let kappa = cfg.guards.kappa;
    let cumulants = match cfg.cumulants {
        CumulantSource::Analytic => CumulantExpansion::planar_fourth_order(),
        CumulantSource::Estimated => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0ff_ee00);
            estimate_cumulants(cfg.d, kappa as usize, cfg.cumulant_samples, cfg.cumulant_n_sub, &mut rng).symmetrized()
        }
    };
    EdgeworthModel::new(&cumulants, kappa)
}

fn stream_index(m: u32, tree: usize, role: u64) -> u64 {
    ((m as u64) << 40) | (3 * tree as u64 + role)
}

/// Whitened leaf increments `(G_r G_rᵗ)^{-1/2} Y_r` and the same for `Z_r`,
/// one row of `d₂` per leaf.
fn whitened_leaves(prep: &PreparedTree, tree: &CoupledTree) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let mut y = Vec::new();
    let mut z = Vec::new();
    for r in 0..1usize << prep.m {
        let e = DyadicSet { m: prep.m, n: 0, k: r };
        let w = sym_root(prep.h(e))?.inv_sqrt;
        y.extend((&w * prep.y(e)).iter());
        z.extend((&w * tree.z_at(e)).iter());
    }
    Ok((y, z))
}

struct LevelResult {
    baseline: Vec<f64>,
    coupled: Vec<f64>,
    counts: FallbackCounts,
    /// Per-walk whitened leaves, `Y` and `Z`.
    leaves: Vec<(Vec<f64>, Vec<f64>)>,
}

fn run_level(
    cfg: &ExperimentConfig,
    n: usize,
    model: Option<&EdgeworthModel>,
    keep_leaves: bool,
) -> Result<LevelResult, HarnessError> {
    let m = n.trailing_zeros();
    let kind = cfg.subcoupler;
    type PerTree = (f64, Option<f64>, FallbackCounts, Option<(Vec<f64>, Vec<f64>)>, Option<PreparedTree>);
    let per_tree: Vec<Result<PerTree, HarnessError>> = (0..cfg.samples)
        .into_par_iter()
        .map(|t| {
            let mut sim = streams::stream(cfg.seed, stream_index(m, t, 0));
            let sample = simulate_tree(m, cfg.d, cfg.n_sub, &mut sim);
            let plain = PreparedTree::new(&sample, None);
            let mut rng = streams::stream(cfg.seed, stream_index(m, t, 1));
            let base = couple_tree(&plain, SubCoupler::Independent, &cfg.guards, None, &mut rng)?;
            let base_dev = base.max_deviation();
            match kind {
                SubCoupler::Independent => Ok((base_dev, None, FallbackCounts::default(), None, None)),
                SubCoupler::Assignment => Ok((base_dev, None, FallbackCounts::default(), None, Some(plain))),
                SubCoupler::Edgeworth => {
                    let prep = PreparedTree::new(&sample, model);
                    let mut rng = streams::stream(cfg.seed, stream_index(m, t, 2));
                    let tree = couple_tree(&prep, kind, &cfg.guards, model, &mut rng)?;
                    let leaves = if keep_leaves { Some(whitened_leaves(&prep, &tree)?) } else { None };
                    Ok((base_dev, Some(tree.max_deviation()), tree.counts, leaves, None))
                }
            }
        })
        .collect();
    let mut out = LevelResult { baseline: Vec::new(), coupled: Vec::new(), counts: FallbackCounts::default(), leaves: Vec::new() };
    let mut preps = Vec::new();
    for r in per_tree {
        let (b, c, counts, leaves, prep) = r?;
        out.baseline.push(b);
        out.coupled.extend(c);
        out.counts.merge(&counts);
        out.leaves.extend(leaves);
        preps.extend(prep);
    }
    if kind == SubCoupler::Assignment {
        let seed = streams::derive_seed(&mut streams::stream(cfg.seed, (m as u64) << 40 | 0xff_ffff_ffff));
        let trees = couple_batch_assignment(&preps, &cfg.guards, seed, ASSIGNMENT_BIN)?;
        for (prep, tree) in preps.iter().zip(&trees) {
            out.coupled.push(tree.max_deviation());
            out.counts.merge(&tree.counts);
            if keep_leaves {
                out.leaves.push(whitened_leaves(prep, tree)?);
            }
        }
    }
    Ok(out)
}

/// Marginal checks on pooled whitened leaves: per-walk averages give the
/// standard errors, since leaves of one walk are not independent.
fn fidelity(leaves: &[(Vec<f64>, Vec<f64>)], d2: usize, name: &str, rep: &mut Report) {
    for i in 0..d2 {
        let means: Vec<f64> = leaves.iter().map(|(_, z)| {
            let col: Vec<f64> = z.iter().skip(i).step_by(d2).copied().collect();
            col.iter().sum::<f64>() / col.len() as f64
        }).collect();
        let (mu, se) = mean_se(&means);
        rep.push(Verdict::within_se(&format!("fidelity_mean_{name}_{}", i + 1), mu, 0.0, se, K_SE));
        for j in i..d2 {
            let seconds: Vec<f64> = leaves.iter().map(|(_, z)| {
                let rows = z.len() / d2;
                z.chunks_exact(d2).map(|r| r[i] * r[j]).sum::<f64>() / rows as f64
            }).collect();
            let (c, se) = mean_se(&seconds);
            let target = if i == j { 1.0 } else { 0.0 };
            rep.push(Verdict::within_se(&format!("fidelity_cov_{name}_{}{}", i + 1, j + 1), c, target, se, K_SE));
        }
        let pooled = |side: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<f64> {
            leaves.iter().flat_map(|l| side(l).iter().skip(i).step_by(d2).copied().collect::<Vec<_>>()).collect()
        };
        let ky = fourth_cumulant(&pooled(|l| &l.0));
        let kz = fourth_cumulant(&pooled(|l| &l.1));
        rep.push(Verdict::at_most(&format!("fidelity_fourth_cumulant_{name}_{}", i + 1), kz.abs(), ky.abs(), 0.0));
        rep.value(format!("fourth_cumulant_y_{}", i + 1), ky);
        rep.value(format!("fourth_cumulant_z_{name}_{}", i + 1), kz);
    }
}

pub(crate) fn coupling_rate(cfg: &ExperimentConfig, rep: &mut Report) -> Result<(), HarnessError> {
    let kind = cfg.subcoupler;
    let model = (kind == SubCoupler::Edgeworth).then(|| build_model(cfg));
    let name = kind.name();
    let largest = *cfg.n_list.iter().max().expect("validated non-empty");
    let mut base_pts = Vec::new();
    let mut pts = Vec::new();
    for &n in &cfg.n_list {
        let keep = kind != SubCoupler::Independent && n == largest;
        let level = run_level(cfg, n, model.as_ref(), keep)?;
        let (eb, sb) = coupling_error(&level.baseline, cfg.p);
        base_pts.push(RatePoint { n, error: eb, stderr: sb });
        rep.value(format!("error_independent_n{n}"), eb);
        rep.value(format!("stderr_independent_n{n}"), sb);
        rep.plot.push(PlotRow { series: "independent".into(), n, error: eb, stderr: sb });
        if kind == SubCoupler::Independent {
            continue;
        }
        let (ec, sc) = coupling_error(&level.coupled, cfg.p);
        pts.push(RatePoint { n, error: ec, stderr: sc });
        rep.value(format!("error_{name}_n{n}"), ec);
        rep.value(format!("stderr_{name}_n{n}"), sc);
        rep.value(format!("fallback_rate_{name}_n{n}"), level.counts.rate());
        rep.plot.push(PlotRow { series: name.into(), n, error: ec, stderr: sc });
        rep.push(Verdict::at_most(&format!("{name}_below_independent_n{n}"), ec, eb, sc));
        if keep {
            fidelity(&level.leaves, pair_count(cfg.d), name, rep);
        }
    }
    if cfg.n_list.len() >= 4 {
        let fit = fit_rate(&base_pts)?;
        rep.push(Verdict::in_range("slope_independent", fit.slope, INDEPENDENT_SLOPE.0, INDEPENDENT_SLOPE.1, fit.slope_stderr));
        rep.value("slope_stderr_independent", fit.slope_stderr);
        if kind != SubCoupler::Independent {
            let fit = fit_rate(&pts)?;
            rep.push(Verdict::at_most(&format!("slope_{name}"), fit.slope, COUPLED_SLOPE_MAX, fit.slope_stderr));
            rep.push(Verdict::at_most(&format!("slope_stderr_{name}"), fit.slope_stderr, SLOPE_STDERR_MAX, 0.0));
            rep.value(format!("intercept_{name}"), fit.intercept);
        }
    }
    Ok(())
}

