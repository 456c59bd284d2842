use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const SPECTRUM_TOL: f64 = 1e-9;

/// A k-component Gaussian mixture in the semi-spherical family: every
/// covariance spectrum lies in `[lambda, 1/lambda]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    lambda: f64,
}

impl GmmParams {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
        lambda: f64,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let k = weights.len();
        if k == 0 {
            return Err(Error::param("mixture needs at least one component"));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::param(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param(
                "mixture weights must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::param(format!("mixture weights sum to {sum}, not 1")));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        for (j, (mu, cov)) in means.iter().zip(&covariances).enumerate() {
            Error::check_dim(d, mu.len())?;
            if cov.nrows() != d || cov.ncols() != d {
                return Err(Error::param(format!("covariance {j} is not {d}x{d}")));
            }
            if mu.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
                return Err(Error::param(format!(
                    "component {j} has non-finite entries"
                )));
            }
            if max_asymmetry(cov) > SYMMETRY_TOL {
                return Err(Error::param(format!("covariance {j} is not symmetric")));
            }
            let eig = cov.clone().symmetric_eigenvalues();
            let (lo, hi) = (lambda - SPECTRUM_TOL, 1.0 / lambda + SPECTRUM_TOL);
            if let Some(ev) = eig.iter().find(|&&e| e < lo || e > hi) {
                return Err(Error::param(format!(
                    "covariance {j} has eigenvalue {ev} outside [{lambda}, {}]",
                    1.0 / lambda
                )));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
            lambda,
        })
    }

    /// Builds a mixture from plain rows; covariances are given row-major.
    pub fn from_rows(
        weights: Vec<f64>,
        means: &[Vec<f64>],
        covariances: &[Vec<f64>],
        lambda: f64,
    ) -> Result<Self> {
        let d = means.first().map_or(0, Vec::len);
        let means = means
            .iter()
            .map(|m| DVector::from_column_slice(m))
            .collect();
        let covs = covariances
            .iter()
            .map(|c| {
                if c.len() != d * d {
                    Err(Error::param("covariance row has the wrong length"))
                } else {
                    Ok(DMatrix::from_row_slice(d, d, c))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, means, covs, lambda)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Serializes to the versioned text format (17 significant digits).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let f = |v: f64| format!("{v:.16e}");
        writeln!(out, "gmcs-theta 1").unwrap();
        writeln!(out, "{} {} {}", self.k(), self.dim(), f(self.lambda)).unwrap();
        for j in 0..self.k() {
            writeln!(out, "{}", f(self.weights[j])).unwrap();
            let mean: Vec<String> = self.means[j].iter().map(|&v| f(v)).collect();
            writeln!(out, "{}", mean.join(" ")).unwrap();
            let cov = &self.covariances[j];
            for r in 0..self.dim() {
                let row: Vec<String> = (0..self.dim()).map(|c| f(cov[(r, c)])).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse("end of input", format!("missing {what}")))
        };
        let parse_row = |(lineno, line): (usize, &str), len: usize| -> Result<Vec<f64>> {
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::parse(format!("line {lineno}"), format!("invalid number `{t}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != len {
                return Err(Error::parse(
                    format!("line {lineno}"),
                    format!("expected {len} values, found {}", vals.len()),
                ));
            }
            Ok(vals)
        };

        let (lineno, header) = next("header")?;
        if header != "gmcs-theta 1" {
            return Err(Error::parse(
                format!("line {lineno}"),
                "expected `gmcs-theta 1`",
            ));
        }
        let (lineno, dims) = next("k d lambda line")?;
        let parts: Vec<&str> = dims.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::parse(
                format!("line {lineno}"),
                "expected `k d lambda`",
            ));
        }
        let bad = |m: &str| Error::parse(format!("line {lineno}"), m.to_string());
        let k: usize = parts[0].parse().map_err(|_| bad("invalid k"))?;
        let d: usize = parts[1].parse().map_err(|_| bad("invalid d"))?;
        let lambda: f64 = parts[2].parse().map_err(|_| bad("invalid lambda"))?;

        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for _ in 0..k {
            weights.push(parse_row(next("weight")?, 1)?[0]);
            means.push(parse_row(next("mean")?, d)?);
            let mut cov = Vec::with_capacity(d * d);
            for _ in 0..d {
                cov.extend(parse_row(next("covariance row")?, d)?);
            }
            covs.push(cov);
        }
        if let Some((lineno, _)) = lines.next() {
            return Err(Error::parse(format!("line {lineno}"), "trailing content"));
        }
        Self::from_rows(weights, &means, &covs, lambda)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r + 1..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in r + 1..m.ncols() {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// Projects a symmetric matrix onto the spectral band `[lambda, 1/lambda]`
/// by clamping its eigenvalues. Matrices already inside the band are returned
/// unchanged.
pub fn clamp_covariance(sigma: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    clamp_covariance_reporting(sigma, lambda).map(|(m, _)| m)
}

/// As [`clamp_covariance`], also reporting whether any eigenvalue moved.
pub fn clamp_covariance_reporting(
    sigma: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, bool)> {
    check_lambda(lambda)?;
    if !sigma.is_square() {
        return Err(Error::param("covariance must be square"));
    }
    let scale = sigma.amax().max(1.0);
    if max_asymmetry(sigma) > 1e-9 * scale {
        return Err(Error::param("covariance is not symmetric"));
    }
    let mut sym = sigma.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym.clone());
    let (lo, hi) = (lambda, 1.0 / lambda);
    if eig.eigenvalues.iter().all(|&e| (lo..=hi).contains(&e)) {
        return Ok((sym, false));
    }
    let clamped = eig.eigenvalues.map(|e| e.clamp(lo, hi));
    let mut out =
        &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok((out, true))
}

/// `U·diag(sqrt(e))` for `Σ = U·diag(e)·Uᵀ`, used to draw `μ + U D^{1/2} z`.
pub(crate) fn sqrt_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sigma.clone());
    let roots = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&roots)
}
