//! Semi-spherical Gaussian mixtures: parameters, log-domain evaluation,
//! inequality checkers and weighted EM.

mod checks;
pub mod density;
pub mod em;
mod params;

pub use checks::{lemma6_residual, relative_error_eta, theorem14_check, LikelihoodCheck};
pub use density::{
    cost_of_set, log_gaussian, log_normalizer, negative_log_likelihood, point_cost,
    sq_dist_to_means, MixtureEval,
};
pub use em::{
    e_step, em_fit, em_fit_from, em_fit_from_responsibilities, em_fit_traced, fit_best_of, m_step,
    BestFit, EmConfig, EmReport, MStep, Responsibilities,
};
pub use params::{clamp_covariance, clamp_covariance_reporting, GmmParams};
pub(crate) use params::{sqrt_factor, symmetrize};
