use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{CouplingError, DyadicSet};
use crate::levyarea::{pair_count, pairs, x_dim};

/// `M_r`: row `(k,l)` is `√N (W_l e_k − W_k e_l)`.
pub fn build_m(w: &[f64], n_steps: usize) -> DMatrix<f64> {
    let d = w.len();
    let s = (n_steps as f64).sqrt();
    let mut m = DMatrix::zeros(pair_count(d), d);
    for (row, (k, l)) in pairs(d).enumerate() {
        m[(row, k)] = s * w[l];
        m[(row, l)] = -s * w[k];
    }
    m
}

/// `G_r = 12^{-1/2} [M_r | I]`, so that `N A_r = G_r X_r`.
pub fn build_g(w: &[f64], n_steps: usize) -> DMatrix<f64> {
    assert!(n_steps >= 1);
    let d = w.len();
    let d2 = pair_count(d);
    let c = 12f64.sqrt().recip();
    let m = build_m(w, n_steps);
    let mut g = DMatrix::zeros(d2, x_dim(d));
    g.view_mut((0, 0), (d2, d)).copy_from(&(m * c));
    for i in 0..d2 {
        g[(i, d + i)] = c;
    }
    g
}

/// `H_E = 2^{-n} Σ_{r∈E} G_r G_rᵗ`; `g_list` holds the `2^n` matrices of `E`.
pub fn build_he(node: &DyadicSet, g_list: &[DMatrix<f64>]) -> DMatrix<f64> {
    assert_eq!(g_list.len(), node.len(), "one G per index of the dyadic set");
    let d2 = g_list[0].nrows();
    let mut h = DMatrix::zeros(d2, d2);
    for g in g_list {
        h += g * g.transpose();
    }
    h / node.len() as f64
}

/// Symmetric square root and inverse square root.
#[derive(Clone, Debug)]
pub struct SymRoot {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub eig_min: f64,
    pub eig_max: f64,
}

pub fn sym_root(m: &DMatrix<f64>) -> Result<SymRoot, CouplingError> {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        if !(v > 0.0 && v.is_finite()) {
            return Err(CouplingError::Singular(v));
        }
        let s = v.sqrt();
        return Ok(SymRoot {
            sqrt: DMatrix::from_element(1, 1, s),
            inv_sqrt: DMatrix::from_element(1, 1, 1.0 / s),
            eig_min: v,
            eig_max: v,
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let eig_min = eig.eigenvalues.min();
    let eig_max = eig.eigenvalues.max();
    if !(eig_min > 0.0 && eig_max.is_finite()) {
        return Err(CouplingError::Singular(eig_min));
    }
    let q = &eig.eigenvectors;
    let root = |f: fn(f64) -> f64| {
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&v| f(v)),
        ));
        q * diag * q.transpose()
    };
    Ok(SymRoot { sqrt: root(f64::sqrt), inv_sqrt: root(|v| 1.0 / v.sqrt()), eig_min, eig_max })
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `(J, H)` with `E[Z_F | Z_E = x] = J x` and `Cov[Z_F | Z_E] = H` when
/// `Z_E = 2^{-1/2}(Z_F + Z_G)` for independent `Z_F ~ N(0, H_F)`,
/// `Z_G ~ N(0, H_G)`:
/// `J = 2^{-1/2} H_F H_E⁻¹` and `H = ½ H_F H_E⁻¹ H_G`.
pub fn conditional_matrices(
    h_e: &DMatrix<f64>,
    h_f: &DMatrix<f64>,
    h_g: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), CouplingError> {
    let inv = h_e.clone().try_inverse().ok_or(CouplingError::Singular(0.0))?;
    let hf_inv = h_f * inv;
    let j = &hf_inv * std::f64::consts::FRAC_1_SQRT_2;
    let h = symmetrize(&(&hf_inv * h_g * 0.5));
    Ok((j, h))
}

/// `H_E` for a node together with `J`, `H` towards its first child.
#[derive(Clone, Debug)]
pub struct NodeMatrices {
    pub h_e: DMatrix<f64>,
    pub j: Option<DMatrix<f64>>,
    pub h: Option<DMatrix<f64>>,
}

pub fn node_matrices(node: &DyadicSet, g_list: &[DMatrix<f64>]) -> Result<NodeMatrices, CouplingError> {
    let h_e = build_he(node, g_list);
    if node.n == 0 {
        return Ok(NodeMatrices { h_e, j: None, h: None });
    }
    let (f, g) = node.children();
    let half = node.len() / 2;
    let h_f = build_he(&f, &g_list[..half]);
    let h_g = build_he(&g, &g_list[half..]);
    let (j, h) = conditional_matrices(&h_e, &h_f, &h_g)?;
    Ok(NodeMatrices { h_e, j: Some(j), h: Some(h) })
}

/// Operator 2-norm of a symmetric positive definite matrix's inverse.
pub fn inverse_norm(h: &DMatrix<f64>) -> Result<f64, CouplingError> {
    Ok(1.0 / sym_root(h)?.eig_min)
}

/// `‖G‖₂²`, the largest eigenvalue of `G Gᵗ`.
pub fn g_norm_sq(g: &DMatrix<f64>) -> f64 {
    let ggt = g * g.transpose();
    if ggt.nrows() == 1 {
        return ggt[(0, 0)];
    }
    SymmetricEigen::new(ggt).eigenvalues.max()
}

/// Empirical exponential moment and tail shape of `‖G_r‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    pub alpha: f64,
    pub samples: usize,
    pub mean_exp: f64,
    pub std_error: f64,
    pub finite: bool,
    /// Least-squares slope of `log P(‖G‖² > x)` against `x` over the top
    /// decile of the sample.
    pub log_survival_slope: f64,
}

pub fn tail_statistics(g_batch: &[DMatrix<f64>], alpha: f64) -> TailReport {
    let norms: Vec<f64> = g_batch.iter().map(g_norm_sq).collect();
    tail_statistics_from_norms(&norms, alpha)
}

/// As [`tail_statistics`] from precomputed values of `‖G_r‖²`.
pub fn tail_statistics_from_norms(norms: &[f64], alpha: f64) -> TailReport {
    let n = norms.len();
    assert!(n >= 20, "tail statistics need a reasonable batch");
    let vals: Vec<f64> = norms.iter().map(|v| (alpha * v).exp()).collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Survival at the i-th order statistic is (n − i)/n; drop the last point
    // where it vanishes.
    let start = n - n / 10;
    let pts: Vec<(f64, f64)> = (start..n - 1)
        .map(|i| (sorted[i], ((n - 1 - i) as f64 / n as f64).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    TailReport {
        alpha,
        samples: n,
        mean_exp: mean,
        std_error: (var / n as f64).sqrt(),
        finite: mean.is_finite() && var.is_finite(),
        log_survival_slope: sxy / sxx,
    }
}

/// `E exp(α‖G_r‖²) = e^{α/12} (1 − α/6)^{-d/2}`, using
/// `‖G_r‖² = (1 + N|W_r|²)/12` with `N|W_r|² ~ χ²_d`.
pub fn tail_moment_exact(alpha: f64, d: usize) -> f64 {
    assert!(alpha < 6.0);
    (alpha / 12.0).exp() * (1.0 - alpha / 6.0).powf(-(d as f64) / 2.0)
}
