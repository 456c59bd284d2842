//! Runtime-checkable forms of the per-point cost inequalities and the direct
//! likelihood comparison between a set and its coreset.

use std::f64::consts::PI;

use super::density::MixtureEval;
use super::GmmParams;
use crate::dataset::PointSet;
use crate::error::{Error, Result};
use crate::numeric::sq_dist;

/// `(1/λ)‖x − y‖² + 2 f_θ(y) − f_θ(x)`; nonnegative for every θ in the
/// semi-spherical family.
pub fn lemma6_residual(x: &[f64], y: &[f64], theta: &GmmParams) -> Result<f64> {
    Error::check_dim(theta.dim(), x.len())?;
    Error::check_dim(theta.dim(), y.len())?;
    let eval = MixtureEval::new(theta)?;
    Ok(sq_dist(x, y) / theta.lambda() + 2.0 * eval.point_cost(y) - eval.point_cost(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodCheck {
    /// Every component satisfies `Π spec(Σ_i) ≥ (2π)^{-d}`.
    pub precondition_holds: bool,
    /// `|L(X|θ) − L(C|θ)| / L(X|θ)`.
    pub ratio: f64,
}

/// Compares the negative log-likelihoods of a set and a weighted summary.
pub fn theorem14_check<X, C>(x: &X, coreset: &C, theta: &GmmParams) -> Result<LikelihoodCheck>
where
    X: PointSet + ?Sized,
    C: PointSet + ?Sized,
{
    let d = theta.dim() as f64;
    let threshold = -d * (2.0 * PI).ln();
    let precondition_holds = theta.covariances().iter().all(|c| {
        let log_det: f64 = c
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .map(|e| e.ln())
            .sum();
        log_det >= threshold
    });
    let eval = MixtureEval::new(theta)?;
    let full = eval.negative_log_likelihood(x)?;
    let summary = eval.negative_log_likelihood(coreset)?;
    Ok(LikelihoodCheck {
        precondition_holds,
        ratio: (full - summary).abs() / full.abs(),
    })
}

/// `|(candidate − full) / full|`.
pub fn relative_error_eta(nll_candidate: f64, nll_full: f64) -> Result<f64> {
    if nll_full == 0.0 {
        return Err(Error::param("reference negative log-likelihood is zero"));
    }
    Ok(((nll_candidate - nll_full) / nll_full).abs())
}
