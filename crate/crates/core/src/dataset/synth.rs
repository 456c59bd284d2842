//! Sampling from Gaussian mixtures and the named synthetic presets.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::DataSet;
use crate::error::{Error, Result};
use crate::gmm::{sqrt_factor, GmmParams};
use crate::rng;

/// `n` i.i.d. draws from `theta`: a component by weight, then `μ + U·D^{1/2}·z`.
pub fn generate_gmm_sample(theta: &GmmParams, n: usize, seed: u64) -> Result<DataSet> {
    if n == 0 {
        return Err(Error::param("sample size must be at least 1"));
    }
    let d = theta.dim();
    let factors: Vec<DMatrix<f64>> = theta.covariances().iter().map(sqrt_factor).collect();
    let mut cumulative = Vec::with_capacity(theta.k());
    let mut acc = 0.0;
    for &w in theta.weights() {
        acc += w;
        cumulative.push(acc);
    }
    let last_positive = theta.weights().iter().rposition(|&w| w > 0.0).unwrap_or(0);

    let mut r = rng::from_seed(seed);
    let mut coords = Vec::with_capacity(n * d);
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        let u = r.random::<f64>() * acc;
        let j = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last_positive)
            .min(last_positive);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut r);
        }
        let x = &theta.means()[j] + &factors[j] * &z;
        coords.extend(x.iter());
    }
    DataSet::from_coords(coords, d)
}

/// Named synthetic mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two unit-covariance components 20 apart; component 0 has weight `1/√n`.
    Imbalanced,
    /// Three unit-covariance components with unequal weights.
    SphericalK3,
    /// Ten anisotropic components in five dimensions with geometric weights.
    SkewedK10,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imbalanced" => Ok(Preset::Imbalanced),
            "spherical-k3" => Ok(Preset::SphericalK3),
            "skewed-k10" => Ok(Preset::SkewedK10),
            other => Err(Error::param(format!(
                "unknown preset `{other}` (expected imbalanced, spherical-k3 or skewed-k10)"
            ))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Imbalanced => "imbalanced",
            Preset::SphericalK3 => "spherical-k3",
            Preset::SkewedK10 => "skewed-k10",
        }
    }

    pub fn default_dim(self) -> usize {
        match self {
            Preset::Imbalanced | Preset::SphericalK3 => 2,
            Preset::SkewedK10 => 5,
        }
    }
}

/// Mixture for a preset. `n` matters only for [`Preset::Imbalanced`]; `dim`
/// overrides the preset's default dimension when given.
pub fn preset(p: Preset, n: usize, dim: Option<usize>, lambda: f64) -> Result<GmmParams> {
    let d = dim.unwrap_or(p.default_dim());
    if d == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    let axis = |v: &[f64]| {
        let mut m = DVector::zeros(d);
        for (i, &x) in v.iter().enumerate().take(d) {
            m[i] = x;
        }
        m
    };
    match p {
        Preset::Imbalanced => {
            if n < 2 {
                return Err(Error::param("imbalanced preset needs n >= 2"));
            }
            let small = 1.0 / (n as f64).sqrt();
            GmmParams::new(
                vec![small, 1.0 - small],
                vec![axis(&[10.0]), axis(&[-10.0])],
                vec![DMatrix::identity(d, d); 2],
                lambda,
            )
        }
        Preset::SphericalK3 => GmmParams::new(
            vec![0.6, 0.3, 0.1],
            vec![axis(&[0.0, 0.0]), axis(&[8.0, 0.0]), axis(&[4.0, 7.0])],
            vec![DMatrix::identity(d, d); 3],
            lambda,
        ),
        Preset::SkewedK10 => skewed(d, lambda),
    }
}

fn skewed(d: usize, lambda: f64) -> Result<GmmParams> {
    // fixed internal stream so the mixture itself never depends on the sample seed
    let mut r = rng::from_seed(0x5EED_0010);
    let k = 10;
    let raw: Vec<f64> = (0..k).map(|j| 0.6f64.powi(j)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..k)
        .map(|_| DVector::from_fn(d, |_, _| r.random_range(-12.0..12.0)))
        .collect();
    let covs = (0..k)
        .map(|_| {
            let q = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut r))
                .qr()
                .q();
            let eig = DVector::from_fn(d, |_, _| 4f64.powf(r.random_range(-1.0..1.0)));
            let mut c = &q * DMatrix::from_diagonal(&eig) * q.transpose();
            crate::gmm::symmetrize(&mut c);
            c
        })
        .collect();
    GmmParams::new(weights, means, covs, lambda)
}
