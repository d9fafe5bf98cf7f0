//! Dyadic coupling of the Lévy-area walk with its Gaussian surrogate.
//!
//! For a step count `N = 2^m`, leaf `r` carries `Y_r = G_r X_r = N A_r` and
//! every dyadic set `E` of size `2^n` carries `Y_E = 2^{-n/2} Σ_{r∈E} Y_r`,
//! with conditional covariance `H_E` given the increments. The Gaussian side
//! `Z` is built top-down: first `Z` at the root from `Y` at the root, then at
//! each node `Z_F = Z_F* + J(Z_E − Y_E)` and `Z_G = √2 Z_E − Z_F`, where
//! `Z_F*` is produced from `Y_F` by a pluggable sub-coupler.

mod assignment;
mod edgeworth;
mod matrices;
mod tree;

use thiserror::Error;

pub use assignment::couple_batch_assignment;
pub use edgeworth::EdgeworthModel;
pub use matrices::{
    build_g, build_he, build_m, conditional_matrices, g_norm_sq, inverse_norm, node_matrices,
    sym_root, tail_moment_exact, tail_statistics, tail_statistics_from_norms, NodeMatrices, SymRoot,
    TailReport,
};
pub use tree::{
    couple_tree, coupling_error, max_partial_sum_deviation, partial_sums, run_coupled_walk,
    simulate_tree, write_trajectory_csv, CoupledTree, FallbackCounts, PreparedTree, TreeSample,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("dyadic set (m={m}, n={n}, k={k}) is out of range")]
    BadDyadicSet { m: u32, n: u32, k: usize },
    #[error("matrix is numerically singular (smallest eigenvalue {0:e})")]
    Singular(f64),
    #[error("invalid guard configuration: {0}")]
    BadGuard(String),
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("edgeworth sub-coupler needs a cumulant model")]
    MissingModel,
}

/// The index block `{k 2ⁿ, …, (k+1) 2ⁿ − 1}` inside `0..2^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicSet {
    pub m: u32,
    pub n: u32,
    pub k: usize,
}

impl DyadicSet {
    pub fn new(m: u32, n: u32, k: usize) -> Result<Self, CouplingError> {
        if n > m || k >= 1usize << (m - n) {
            return Err(CouplingError::BadDyadicSet { m, n, k });
        }
        Ok(DyadicSet { m, n, k })
    }

    pub fn root(m: u32) -> Self {
        DyadicSet { m, n: m, k: 0 }
    }

    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_leaf(&self) -> bool {
        self.n == 0
    }

    pub fn start(&self) -> usize {
        self.k << self.n
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start()..self.start() + self.len()
    }

    /// The two halves `(F, G)`; panics on a leaf.
    pub fn children(&self) -> (DyadicSet, DyadicSet) {
        assert!(self.n > 0, "a singleton has no children");
        let f = DyadicSet { m: self.m, n: self.n - 1, k: 2 * self.k };
        (f, DyadicSet { k: 2 * self.k + 1, ..f })
    }
}

/// Per-node rule producing `Z_F*` from `Y_F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubCoupler {
    /// `Z_F* ~ N(J Y_E, H)` independent of `Y_F`.
    Independent,
    /// Transport of the Edgeworth-corrected conditional law onto `N(0, I)`.
    Edgeworth,
    /// Optimal assignment between pooled residuals and fresh Gaussian draws.
    Assignment,
}

impl SubCoupler {
    pub fn name(&self) -> &'static str {
        match self {
            SubCoupler::Independent => "independent",
            SubCoupler::Edgeworth => "edgeworth",
            SubCoupler::Assignment => "assignment",
        }
    }
}

impl std::str::FromStr for SubCoupler {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "independent" => Ok(SubCoupler::Independent),
            "edgeworth" => Ok(SubCoupler::Edgeworth),
            "assignment" => Ok(SubCoupler::Assignment),
            other => Err(format!("unknown sub-coupler '{other}'")),
        }
    }
}

/// Why a node fell back to an independent Gaussian draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fallback {
    /// Some `‖G_r‖` in the node exceeds `g_cap · 2^{nη}`.
    GuardNorm,
    /// The whitened residual exceeds the cap in sup-norm.
    ResidualCap,
    /// Newton inversion of the perturbation map failed.
    NoConvergence,
    /// The series or matrices were numerically unusable.
    Numerical,
}

impl Fallback {
    pub fn code(self) -> u8 {
        match self {
            Fallback::GuardNorm => 1,
            Fallback::ResidualCap => 2,
            Fallback::NoConvergence => 3,
            Fallback::Numerical => 4,
        }
    }
}

/// Thresholds turning the guard events into fallback triggers.
#[derive(Clone, Debug, PartialEq)]
pub struct GuardConfig {
    /// Growth exponent of the norm cap, in `(0, 1/44)`.
    pub eta: f64,
    /// Highest cumulant order kept by the Edgeworth sub-coupler (4 or 6).
    pub kappa: u32,
    /// Node at level `n` passes when every `‖G_r‖₂ ≤ g_cap · 2^{nη}`.
    pub g_cap: f64,
    /// Cap on the sup-norm of the whitened residual.
    pub residual_cap: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig { eta: 0.02, kappa: 4, g_cap: 4.0, residual_cap: 8.0 }
    }
}

impl GuardConfig {
    pub fn validate(&self) -> Result<(), CouplingError> {
        if !(self.eta > 0.0 && self.eta < 1.0 / 44.0) {
            return Err(CouplingError::BadGuard(format!("eta = {} not in (0, 1/44)", self.eta)));
        }
        if self.kappa != 4 && self.kappa != 6 {
            return Err(CouplingError::BadGuard(format!("kappa = {} must be 4 or 6", self.kappa)));
        }
        if !(self.g_cap > 0.0 && self.residual_cap > 0.0) {
            return Err(CouplingError::BadGuard("caps must be positive".into()));
        }
        Ok(())
    }

    /// `g_cap · 2^{nη}`.
    pub fn norm_cap(&self, level: u32) -> f64 {
        self.g_cap * 2f64.powf(level as f64 * self.eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_children_partition() {
        let e = DyadicSet::new(5, 3, 2).unwrap();
        assert_eq!(e.indices(), 16..24);
        let (f, g) = e.children();
        assert_eq!(f.indices(), 16..20);
        assert_eq!(g.indices(), 20..24);
        assert!(DyadicSet::new(3, 4, 0).is_err());
        assert!(DyadicSet::new(3, 1, 4).is_err());
        assert!(DyadicSet::new(3, 0, 7).unwrap().is_leaf());
    }

    #[test]
    fn guard_validation() {
        assert!(GuardConfig::default().validate().is_ok());
        let bad = GuardConfig { eta: 0.05, ..GuardConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GuardConfig { kappa: 5, ..GuardConfig::default() };
        assert!(bad.validate().is_err());
        assert!((GuardConfig::default().norm_cap(0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn subcoupler_names_roundtrip() {
        for s in [SubCoupler::Independent, SubCoupler::Edgeworth, SubCoupler::Assignment] {
            assert_eq!(s.name().parse::<SubCoupler>().unwrap(), s);
        }
        assert!("bogus".parse::<SubCoupler>().is_err());
    }
}
