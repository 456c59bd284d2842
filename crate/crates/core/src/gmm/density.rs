//! Log-domain densities, the mixture normalizer and the data-dependent cost.
//!
//! The negative log-likelihood splits as `nll(S, θ) = -W·ln Z(θ) + cost(S, θ)`
//! where `W` is the total weight, `Z(θ) = Σ_i w_i / sqrt|2πΣ_i|`, and
//! `cost` sums the per-point costs `f_θ(x) ≥ 0`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::GmmParams;
use crate::dataset::PointSet;
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, par_sum};

/// Lower Cholesky factor and log-determinant of a symmetric positive definite
/// matrix.
fn factor(sigma: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let d = sigma.nrows();
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut lower = vec![0.0; d * d];
    let mut log_det = 0.0;
    for r in 0..d {
        for c in 0..=r {
            lower[r * d + c] = l[(r, c)];
        }
        log_det += 2.0 * l[(r, r)].ln();
    }
    Ok((lower, log_det))
}

/// `(x-μ)ᵀ Σ⁻¹ (x-μ)` via forward substitution with the lower factor.
#[inline]
fn mahalanobis(x: &[f64], mean: &[f64], lower: &[f64], scratch: &mut [f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for r in 0..d {
        let row = &lower[r * d..r * d + r + 1];
        let mut v = x[r] - mean[r];
        for c in 0..r {
            v -= row[c] * scratch[c];
        }
        v /= row[r];
        scratch[r] = v;
        acc += v * v;
    }
    acc
}

/// `ln N(x; μ, Σ)`.
pub fn log_gaussian(x: &[f64], mu: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    let d = x.len();
    Error::check_dim(d, mu.len())?;
    Error::check_dim(d, sigma.nrows())?;
    let (lower, log_det) = factor(sigma)?;
    let mut scratch = vec![0.0; d];
    let m = mahalanobis(x, mu, &lower, &mut scratch);
    Ok(-0.5 * m - 0.5 * (d as f64 * (2.0 * PI).ln() + log_det))
}

/// A mixture prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct MixtureEval {
    k: usize,
    d: usize,
    means: Vec<f64>,
    lowers: Vec<f64>,
    /// `ln w_j − ½ ln|2πΣ_j|`
    log_coef: Vec<f64>,
    log_z: f64,
}

impl MixtureEval {
    pub fn new(theta: &GmmParams) -> Result<Self> {
        let (k, d) = (theta.k(), theta.dim());
        let mut means = Vec::with_capacity(k * d);
        let mut lowers = Vec::with_capacity(k * d * d);
        let mut log_coef = Vec::with_capacity(k);
        let ln_2pi = (2.0 * PI).ln();
        for j in 0..k {
            means.extend(theta.means()[j].iter());
            let (lower, log_det) = factor(&theta.covariances()[j])?;
            lowers.extend(lower);
            log_coef.push(theta.weights()[j].ln() - 0.5 * (d as f64 * ln_2pi + log_det));
        }
        let log_z = log_sum_exp(&log_coef);
        Ok(Self {
            k,
            d,
            means,
            lowers,
            log_coef,
            log_z,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    /// Writes `ln w_j + ln N(x; μ_j, Σ_j)` for every component into `out`.
    pub fn component_terms(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mut scratch = [0.0f64; 32];
        let mut heap;
        let scratch: &mut [f64] = if d <= 32 {
            &mut scratch[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for j in 0..self.k {
            let m = mahalanobis(
                x,
                &self.means[j * d..(j + 1) * d],
                &self.lowers[j * d * d..(j + 1) * d * d],
                scratch,
            );
            out[j] = self.log_coef[j] - 0.5 * m;
        }
    }

    /// `ln P(x | θ)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.k];
        self.component_terms(x, &mut terms);
        log_sum_exp(&terms)
    }

    /// `f_θ(x) = ln Z(θ) − ln P(x | θ)`.
    pub fn point_cost(&self, x: &[f64]) -> f64 {
        self.log_z - self.log_density(x)
    }

    pub fn cost_of_set<S: PointSet + ?Sized>(&self, s: &S) -> Result<f64> {
        Error::check_dim(self.d, s.dim())?;
        Ok(par_sum(s.len(), |i| {
            let w = s.weight(i);
            if w == 0.0 {
                0.0
            } else {
                w * self.point_cost(s.point(i))
            }
        }))
    }

    pub fn negative_log_likelihood<S: PointSet + ?Sized>(&self, s: &S) -> Result<f64> {
        Ok(-s.total_weight() * self.log_z + self.cost_of_set(s)?)
    }
}

/// `ln Z(θ)`.
pub fn log_normalizer(theta: &GmmParams) -> Result<f64> {
    Ok(MixtureEval::new(theta)?.log_normalizer())
}

/// `f_θ(x)`.
pub fn point_cost(x: &[f64], theta: &GmmParams) -> Result<f64> {
    Error::check_dim(theta.dim(), x.len())?;
    Ok(MixtureEval::new(theta)?.point_cost(x))
}

/// `Σ w(x)·f_θ(x)` over the set.
pub fn cost_of_set<S: PointSet + ?Sized>(s: &S, theta: &GmmParams) -> Result<f64> {
    MixtureEval::new(theta)?.cost_of_set(s)
}

/// Weighted negative log-likelihood `−Σ w(x) ln P(x | θ)`, evaluated through
/// the normalizer/cost decomposition.
pub fn negative_log_likelihood<S: PointSet + ?Sized>(s: &S, theta: &GmmParams) -> Result<f64> {
    MixtureEval::new(theta)?.negative_log_likelihood(s)
}

/// Squared distance from `x` to the nearest component mean.
pub fn sq_dist_to_means(x: &[f64], theta: &GmmParams) -> f64 {
    theta
        .means()
        .iter()
        .map(|m| {
            let diff = DVector::from_column_slice(x) - m;
            diff.norm_squared()
        })
        .fold(f64::INFINITY, f64::min)
}
