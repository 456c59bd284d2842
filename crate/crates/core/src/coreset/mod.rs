//! Importance-sampled coresets.
//!
//! [`build_coreset`] runs the whole pipeline: a bicriteria solution, its
//! Voronoi partition, per-point sensitivity scores, and `m` draws from the
//! induced distribution with weights `w(x)/(m·q(x))`.

mod alias;
mod sensitivity;

pub use alias::{build_alias_table, AliasTable};
pub use sensitivity::{
    brute_force_sensitivity, normalized_sensitivity_bound, sensitivity_scores, SensitivityScores,
};

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::dataset::{voronoi_partition, DataSet, PointSet};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::seeding::{adaptive_bicriteria, best_seed_of_p, Bicriteria};

/// Provenance carried by every coreset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoresetMeta {
    /// Number of raw points the coreset stands for.
    pub source_n: u64,
    pub m_requested: usize,
    /// Accumulated ε budget (0 for an exact copy).
    pub epsilon_budget: f64,
    /// Level in a composition tree; 0 for a leaf or a direct build.
    pub level: u32,
}

/// A weighted sample `{(γ_i, x_i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coreset {
    coords: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
    pub meta: CoresetMeta,
}

impl PointSet for Coreset {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coords(&self) -> &[f64] {
        &self.coords
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Coreset {
    /// Wraps weighted points. Weights must be finite and nonnegative.
    pub fn new(coords: Vec<f64>, weights: Vec<f64>, dim: usize, meta: CoresetMeta) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::data(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite coordinate in point {}",
                i / dim
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::data(format!(
                "point {i} has invalid weight {}",
                weights[i]
            )));
        }
        Ok(Self {
            coords,
            weights,
            dim,
            meta,
        })
    }

    /// A coreset with no points, the identity for merging.
    pub fn empty(dim: usize) -> Self {
        Self {
            coords: Vec::new(),
            weights: Vec::new(),
            dim,
            meta: CoresetMeta {
                source_n: 0,
                m_requested: 0,
                epsilon_budget: 0.0,
                level: 0,
            },
        }
    }

    /// The data set itself viewed as an exact coreset.
    pub fn from_dataset(x: &DataSet) -> Self {
        Self {
            coords: x.coords().to_vec(),
            weights: x.weights().to_vec(),
            dim: x.dim(),
            meta: CoresetMeta {
                source_n: x.len() as u64,
                m_requested: x.len(),
                epsilon_budget: 0.0,
                level: 0,
            },
        }
    }

    /// Fails when the coreset is empty or carries no positive weight.
    pub fn to_dataset(&self) -> Result<DataSet> {
        DataSet::new(self.coords.clone(), self.weights.clone(), self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedingMode {
    /// Best of `⌈log₂(1/δ)⌉` k-means++ runs.
    KMeansPlusPlus,
    /// Adaptive halving.
    Adaptive,
}

impl FromStr for SeedingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeanspp" => Ok(SeedingMode::KMeansPlusPlus),
            "adaptive" => Ok(SeedingMode::Adaptive),
            other => Err(Error::param(format!(
                "unknown seeding `{other}` (expected kmeanspp or adaptive)"
            ))),
        }
    }
}

impl SeedingMode {
    pub fn name(self) -> &'static str {
        match self {
            SeedingMode::KMeansPlusPlus => "kmeanspp",
            SeedingMode::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoresetParams {
    pub k: usize,
    pub m: usize,
    pub delta: f64,
    pub seeding: SeedingMode,
    /// ε recorded in the coreset's metadata. The sample size is `m`; this
    /// value is bookkeeping for composition.
    pub epsilon: f64,
}

impl CoresetParams {
    pub fn new(k: usize, m: usize) -> Self {
        Self {
            k,
            m,
            delta: 0.1,
            seeding: SeedingMode::KMeansPlusPlus,
            epsilon: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::param("m must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Diagnostics of one build.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub alpha: f64,
    pub beta: usize,
    /// `φ(X, B)`.
    pub phi: f64,
    /// Relative deviation of `Σ w·s` from `(3α + 2β)·φ`.
    pub identity_residual: f64,
    /// Distinct points in the sample.
    pub distinct: usize,
}

/// `m` draws with replacement from `scores.q`; each draw of `x` adds
/// `w(x)/(m·q(x))` to its weight. Repeated draws are merged, in index order.
pub fn draw_coreset<S: PointSet + ?Sized>(
    x: &S,
    scores: &SensitivityScores,
    m: usize,
    rng: &mut Rng,
) -> Result<Coreset> {
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    if scores.q.len() != x.len() {
        return Err(Error::param("scores do not match the data set"));
    }
    let table = build_alias_table(&scores.q)?;
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..m {
        *counts.entry(table.sample(rng)).or_default() += 1;
    }
    let d = x.dim();
    let mut coords = Vec::with_capacity(counts.len() * d);
    let mut weights = Vec::with_capacity(counts.len());
    for (&i, &c) in &counts {
        coords.extend_from_slice(x.point(i));
        weights.push(c as f64 * x.weight(i) / (m as f64 * scores.q[i]));
    }
    Coreset::new(
        coords,
        weights,
        d,
        CoresetMeta {
            source_n: x.len() as u64,
            m_requested: m,
            epsilon_budget: 0.0,
            level: 0,
        },
    )
}

fn bicriteria<S: PointSet + ?Sized>(x: &S, p: &CoresetParams, rng: &mut Rng) -> Result<Bicriteria> {
    match p.seeding {
        SeedingMode::KMeansPlusPlus => best_seed_of_p(x, p.k, p.delta, rng),
        SeedingMode::Adaptive => adaptive_bicriteria(x, p.k, p.delta, None, rng),
    }
}

/// Bicriteria, partition, scores, sample.
pub fn build_coreset<S: PointSet + ?Sized>(
    x: &S,
    params: &CoresetParams,
    rng: &mut Rng,
) -> Result<Coreset> {
    build_coreset_with_report(x, params, rng).map(|(c, _)| c)
}

pub fn build_coreset_with_report<S: PointSet + ?Sized>(
    x: &S,
    params: &CoresetParams,
    rng: &mut Rng,
) -> Result<(Coreset, BuildReport)> {
    params.validate()?;
    let b = bicriteria(x, params, rng)?;
    let partition = voronoi_partition(x, &b.centers)?;
    let scores = sensitivity_scores(x, &b, &partition)?;
    let mut c = draw_coreset(x, &scores, params.m, rng)?;
    c.meta.epsilon_budget = params.epsilon;
    let report = BuildReport {
        alpha: scores.alpha,
        beta: scores.beta,
        phi: scores.phi,
        identity_residual: scores.identity_residual(),
        distinct: c.len(),
    };
    Ok((c, report))
}

/// `⌈c·(d⁴k⁶ + k²·ln(1/δ))/(λ⁴ε²)⌉`. Advisory: far beyond desk-scale sizes.
pub fn theorem2_size_bound(
    d: usize,
    k: usize,
    epsilon: f64,
    delta: f64,
    lambda: f64,
    c: f64,
) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::param(format!(
            "epsilon must lie in (0, 1/2), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("constant c must be positive"));
    }
    if d == 0 || k == 0 {
        return Err(Error::param("d and k must be at least 1"));
    }
    let (d, k) = (d as f64, k as f64);
    let num = d.powi(4) * k.powi(6) + k * k * (1.0 / delta).ln();
    let bound = (c * num / (lambda.powi(4) * epsilon * epsilon)).ceil();
    if bound >= u64::MAX as f64 {
        return Err(Error::Numerical("size bound overflows u64".into()));
    }
    Ok(bound as u64)
}
