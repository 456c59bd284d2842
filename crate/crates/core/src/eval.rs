//! Coreset versus uniform subsampling.
//!
//! The data are split once into train and holdout parts. A best-of-R EM fit
//! on the full training set is the baseline. For every sample size and trial,
//! both a coreset and a uniform subsample of the training set are fitted, and
//! the relative error of their holdout NLL against the baseline is recorded,
//! along with the largest cost ratio deviation over a set of probe mixtures.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::coreset::{build_coreset, Coreset, CoresetMeta, CoresetParams, SeedingMode};
use crate::dataset::{DataSet, PointSet};
use crate::error::{Error, Result};
use crate::gmm::{
    clamp_covariance, fit_best_of, negative_log_likelihood, relative_error_eta, EmConfig,
    GmmParams, MixtureEval,
};
use crate::numeric::{par_sum, quantile};
use crate::rng::{self, tag, Rng};
use crate::seeding::kmeanspp_seed;

/// Per-coordinate weighted variance averaged over coordinates.
fn mean_variance<S: PointSet + ?Sized>(x: &S) -> f64 {
    let w = x.total_weight();
    let d = x.dim();
    let mut acc = 0.0;
    for c in 0..d {
        let mean = par_sum(x.len(), |i| x.weight(i) * x.point(i)[c]) / w;
        acc += par_sum(x.len(), |i| x.weight(i) * (x.point(i)[c] - mean).powi(2)) / w;
    }
    acc / d as f64
}

/// Random mixtures for auditing a coreset: means from a k-means++ draw on `x`,
/// covariances `A·Aᵀ/d` scaled to between 3% and 100% of the data variance and
/// clamped into the λ band, weights uniform on the simplex.
pub fn probe_thetas<S: PointSet + ?Sized>(
    x: &S,
    k: usize,
    lambda: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<GmmParams>> {
    let var = mean_variance(x).max(lambda);
    let d = x.dim();
    let k = k.min(x.positive_count()).max(1);
    (0..count)
        .map(|t| {
            let mut r = rng::substream(seed, &[tag::PROBE, t as u64]);
            let centers = kmeanspp_seed(x, k, &mut r)?.centers;
            let raw: Vec<f64> = (0..k).map(|_| -> f64 { Exp1.sample(&mut r) }).collect();
            let total: f64 = raw.iter().sum();
            let weights = raw.iter().map(|v| v / total).collect();
            let means = centers.iter().map(DVector::from_column_slice).collect();
            let covs = (0..k)
                .map(|_| {
                    let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
                    let scale = var * 10f64.powf(r.random_range(-1.5..0.0)) / d as f64;
                    let mut s = &a * a.transpose() * scale;
                    for i in 0..d {
                        for j in 0..i {
                            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                            s[(i, j)] = v;
                            s[(j, i)] = v;
                        }
                    }
                    clamp_covariance(&s, lambda)
                })
                .collect::<Result<Vec<_>>>()?;
            GmmParams::new(weights, means, covs, lambda)
        })
        .collect()
}

/// Per-probe cost of the full set, reused across candidates.
pub struct ProbeSet {
    evals: Vec<MixtureEval>,
    full_costs: Vec<f64>,
}

impl ProbeSet {
    pub fn new<S: PointSet + ?Sized>(x: &S, thetas: &[GmmParams]) -> Result<Self> {
        let evals = thetas
            .iter()
            .map(MixtureEval::new)
            .collect::<Result<Vec<_>>>()?;
        let full_costs = evals
            .iter()
            .map(|e| e.cost_of_set(x))
            .collect::<Result<_>>()?;
        Ok(Self { evals, full_costs })
    }

    pub fn len(&self) -> usize {
        self.evals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evals.is_empty()
    }

    /// `|cost(C, θ)/cost(X, θ) − 1|` for every probe.
    pub fn ratios<S: PointSet + ?Sized>(&self, c: &S) -> Result<Vec<f64>> {
        self.evals
            .iter()
            .zip(&self.full_costs)
            .map(|(e, &full)| {
                let cost = e.cost_of_set(c)?;
                if full > 0.0 {
                    Ok((cost / full - 1.0).abs())
                } else {
                    Ok(cost.abs())
                }
            })
            .collect()
    }

    pub fn max_ratio<S: PointSet + ?Sized>(&self, c: &S) -> Result<f64> {
        Ok(self.ratios(c)?.into_iter().fold(0.0, f64::max))
    }
}

/// `max_θ |cost(C, θ)/cost(X, θ) − 1|` over the given mixtures.
pub fn probe_max_ratio<X, C>(x: &X, c: &C, thetas: &[GmmParams]) -> Result<f64>
where
    X: PointSet + ?Sized,
    C: PointSet + ?Sized,
{
    ProbeSet::new(x, thetas)?.max_ratio(c)
}

/// `min(m, n)` points drawn without replacement, each weighted `w·n/m`.
pub fn uniform_subsample<S: PointSet + ?Sized>(x: &S, m: usize, rng: &mut Rng) -> Result<Coreset> {
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    let n = x.len();
    let take = m.min(n);
    let mut idx = index::sample(rng, n, take).into_vec();
    idx.sort_unstable();
    let scale = n as f64 / take as f64;
    let mut coords = Vec::with_capacity(take * x.dim());
    let mut weights = Vec::with_capacity(take);
    for i in idx {
        coords.extend_from_slice(x.point(i));
        weights.push(x.weight(i) * scale);
    }
    Coreset::new(
        coords,
        weights,
        x.dim(),
        CoresetMeta {
            source_n: n as u64,
            m_requested: m,
            epsilon_budget: 0.0,
            level: 0,
        },
    )
}

/// Random train/holdout split; `train_fraction` of the points go to train.
pub fn split_train_holdout(
    x: &DataSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(DataSet, DataSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = x.len();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::param(format!("{n} points are too few to split")));
    }
    let mut r = rng::substream(seed, &[tag::SPLIT]);
    let perm = index::sample(&mut r, n, n).into_vec();
    let mut train: Vec<usize> = perm[..n_train].to_vec();
    let mut holdout: Vec<usize> = perm[n_train..].to_vec();
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((x.subset(&train)?, x.subset(&holdout)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Coreset,
    Uniform,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Coreset => "coreset",
            Method::Uniform => "uniform",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coreset" => Ok(Method::Coreset),
            "uniform" => Ok(Method::Uniform),
            other => Err(Error::param(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub lambda: f64,
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Restarts of the full-data baseline fit.
    pub baseline_restarts: usize,
    /// Restarts of each candidate fit.
    pub fit_restarts: usize,
    pub probe_thetas: usize,
    pub train_fraction: f64,
    pub delta: f64,
    pub seeding: SeedingMode,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(k: usize, sizes: Vec<usize>, seed: u64) -> Self {
        Self {
            k,
            lambda: 0.001,
            sizes,
            trials: 20,
            baseline_restarts: 10,
            fit_restarts: 1,
            probe_thetas: 20,
            train_fraction: 0.8,
            delta: 0.1,
            seeding: SeedingMode::KMeansPlusPlus,
            max_iters: 100,
            rel_tol: 1e-3,
            seed,
        }
    }

    fn em(&self) -> EmConfig {
        EmConfig {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            ..EmConfig::new(self.k, self.lambda)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub m: usize,
    pub method: Method,
    pub trial: usize,
    pub eta: f64,
    pub probe_max_ratio: f64,
    pub holdout_nll: f64,
    pub sample_points: usize,
    pub build_s: f64,
    pub fit_s: f64,
}

/// Aggregate over trials for one `(m, method)` pair. Timings and the probe
/// ratio are medians.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub m: usize,
    pub method: Method,
    pub median_eta: f64,
    pub p90_eta: f64,
    pub probe_max_ratio: f64,
    pub build_s: f64,
    pub fit_s: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub rows: Vec<EvalRow>,
    /// Sorted by `(m, trial, method)`.
    pub trials: Vec<TrialResult>,
    pub baseline: GmmParams,
    pub baseline_holdout_nll: f64,
    pub baseline_restart_nlls: Vec<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
}

fn fit_and_score(
    sample: &Coreset,
    holdout: &DataSet,
    baseline_nll: f64,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let start = Instant::now();
    let fit = fit_best_of(sample, &cfg.em(), cfg.fit_restarts, seed)?;
    let fit_s = start.elapsed().as_secs_f64();
    let nll = negative_log_likelihood(holdout, &fit.theta)?;
    Ok((relative_error_eta(nll, baseline_nll)?, nll, fit_s))
}

pub fn run_eval(x: &DataSet, cfg: &EvalConfig) -> Result<EvalOutcome> {
    if cfg.sizes.is_empty() || cfg.trials == 0 {
        return Err(Error::param("need at least one size and one trial"));
    }
    let (train, holdout) = split_train_holdout(x, cfg.train_fraction, cfg.seed)?;
    let baseline_seed = rng::substream(cfg.seed, &[tag::BASELINE]).random();
    let base = fit_best_of(&train, &cfg.em(), cfg.baseline_restarts, baseline_seed)?;
    let baseline_holdout_nll = negative_log_likelihood(&holdout, &base.theta)?;
    log::info!(
        "baseline: best of {} restarts, holdout nll {baseline_holdout_nll}",
        cfg.baseline_restarts
    );
    let probes = if cfg.probe_thetas > 0 {
        let thetas = probe_thetas(&train, cfg.k, cfg.lambda, cfg.probe_thetas, cfg.seed)?;
        Some(ProbeSet::new(&train, &thetas)?)
    } else {
        None
    };

    let jobs: Vec<(usize, usize)> = (0..cfg.sizes.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let per_job: Vec<[TrialResult; 2]> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let m = cfg.sizes[s];
            let path = [tag::TRIAL, s as u64, t as u64];
            let mut r = rng::substream(cfg.seed, &path);
            let params = CoresetParams {
                k: cfg.k,
                m,
                delta: cfg.delta,
                seeding: cfg.seeding,
                epsilon: 0.0,
            };
            let start = Instant::now();
            let coreset = build_coreset(&train, &params, &mut r)?;
            let coreset_build = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let uniform = uniform_subsample(&train, m, &mut r)?;
            let uniform_build = start.elapsed().as_secs_f64();
            let fit_seed: u64 = r.random();

            let mut out = Vec::with_capacity(2);
            for (method, sample, build_s) in [
                (Method::Coreset, &coreset, coreset_build),
                (Method::Uniform, &uniform, uniform_build),
            ] {
                let (eta, holdout_nll, fit_s) =
                    fit_and_score(sample, &holdout, baseline_holdout_nll, cfg, fit_seed)?;
                let probe_max_ratio = match &probes {
                    Some(p) => p.max_ratio(sample)?,
                    None => f64::NAN,
                };
                out.push(TrialResult {
                    m,
                    method,
                    trial: t,
                    eta,
                    probe_max_ratio,
                    holdout_nll,
                    sample_points: sample.len(),
                    build_s,
                    fit_s,
                });
            }
            let uniform = out.pop().expect("two methods");
            let coreset = out.pop().expect("two methods");
            Ok([coreset, uniform])
        })
        .collect::<Result<_>>()?;
    let mut trials: Vec<TrialResult> = per_job.into_iter().flatten().collect();
    trials.sort_by_key(|t| (t.m, t.trial, t.method));

    let mut rows = Vec::new();
    for &m in &cfg.sizes {
        for method in [Method::Coreset, Method::Uniform] {
            let sel: Vec<&TrialResult> = trials
                .iter()
                .filter(|r| r.m == m && r.method == method)
                .collect();
            let col = |f: fn(&TrialResult) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<_>>();
            let etas = col(|r| r.eta);
            rows.push(EvalRow {
                m,
                method,
                median_eta: quantile(&etas, 0.5),
                p90_eta: quantile(&etas, 0.9),
                probe_max_ratio: quantile(&col(|r| r.probe_max_ratio), 0.5),
                build_s: quantile(&col(|r| r.build_s), 0.5),
                fit_s: quantile(&col(|r| r.fit_s), 0.5),
            });
        }
    }
    Ok(EvalOutcome {
        rows,
        trials,
        baseline: base.theta,
        baseline_holdout_nll,
        baseline_restart_nlls: base.restart_nlls,
        n_train: train.len(),
        n_holdout: holdout.len(),
    })
}

pub const CSV_HEADER: &str = "m,method,median_eta,p90_eta,probe_max_ratio,build_s,fit_s";

/// Full-precision CSV with [`CSV_HEADER`].
pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            r.m,
            r.method.name(),
            r.median_eta,
            r.p90_eta,
            r.probe_max_ratio,
            r.build_s,
            r.fit_s
        );
    }
    s
}

/// `v` with four significant digits.
pub fn sig4(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{v:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Aligned text table, four significant digits.
pub fn rows_to_table(rows: &[EvalRow]) -> String {
    let header = [
        "m",
        "method",
        "median_eta",
        "p90_eta",
        "probe_max",
        "build_s",
        "fit_s",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.m.to_string(),
                r.method.name().to_string(),
                sig4(r.median_eta),
                sig4(r.p90_eta),
                sig4(r.probe_max_ratio),
                sig4(r.build_s),
                sig4(r.fit_s),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |cells: &[&str], s: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(s, "{}", parts.join("  "));
    };
    line(&header, &mut s);
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut s);
    }
    s
}
