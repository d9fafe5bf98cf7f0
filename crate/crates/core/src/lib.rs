//! Lévy-area random walks, their Gaussian quadratic surrogates, and dyadic
//! Wasserstein couplings between the two, together with the polynomial
//! perturbation calculus and transport estimators the couplings rely on.

pub mod coupling;
pub mod harness;
pub mod levyarea;
pub mod perturb;
pub mod polyalg;
pub mod wasserstein;

mod streams;
