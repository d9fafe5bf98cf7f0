//! Experiment configuration, orchestration and reporting.
//!
//! Each experiment fills a [`Report`] of named verdicts; [`Report::write`]
//! turns it into `results.csv`, `summary.json` and, for rate runs,
//! `plotdata.csv`. Parallel work is split into chunks with their own random
//! streams and reduced in chunk order, so outputs do not depend on the number
//! of worker threads.

mod config;
mod experiments;
mod fit;
mod rate;
mod report;
mod stats;

use thiserror::Error;

pub use config::{CumulantSource, ExperimentConfig, EXPERIMENTS};
pub use experiments::{ALGEBRAIC_TOL, K_SE};
pub use fit::{fit_rate, RateFit, RatePoint};
pub use rate::{COUPLED_SLOPE_MAX, INDEPENDENT_SLOPE, SLOPE_STDERR_MAX};
pub use report::{PlotRow, Report, Verdict};

use crate::coupling::CouplingError;
use crate::perturb::PerturbError;
use crate::polyalg::PolyError;
use crate::wasserstein::WassersteinError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("rate fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Wasserstein(#[from] WassersteinError),
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::UnknownExperiment(_) => 2,
            _ => 1,
        }
    }
}

/// Validates `cfg` and runs its experiment on a pool of `cfg.workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let mut rep = Report { experiment: cfg.experiment.clone(), seed: cfg.seed, config: cfg.echo(), ..Default::default() };
    pool.install(|| match cfg.experiment.as_str() {
        "lemma1-moments" => experiments::lemma1_moments(cfg, &mut rep),
        "matrix-identities" => experiments::matrix_identities(cfg, &mut rep),
        "lsigma-roundtrip" => experiments::lsigma_roundtrip(cfg, &mut rep),
        "smap-roundtrip" => experiments::smap_roundtrip(cfg, &mut rep),
        "expansion-moments" => experiments::expansion_moments(cfg, &mut rep),
        "tail-stats" => experiments::tail_stats(cfg, &mut rep),
        "wasserstein-sanity" => experiments::wasserstein_sanity(cfg, &mut rep),
        "coupling-rate" => rate::coupling_rate(cfg, &mut rep),
        other => Err(HarnessError::UnknownExperiment(other.to_string())),
    })?;
    Ok(rep)
}
