//! Weighted EM for Gaussian mixtures.
//!
//! Responsibilities carry the point weights: row `i` of η sums to `γ_i`, so a
//! point of weight 2 contributes exactly like two unit copies. Covariances are
//! computed two-pass against the final means, floored by `λ·I`, and clamped
//! into the spectral band `[λ, 1/λ]`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::density::MixtureEval;
use super::params::{check_lambda, clamp_covariance_reporting, symmetrize};
use super::GmmParams;
use crate::dataset::PointSet;
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, par_sum, par_sum_vec, CHUNK};
use crate::rng::{self, tag, Rng};
use crate::seeding::weighted_lloyd;

/// Components whose responsibility mass falls below this fraction of the
/// total weight are treated as dead.
const DEAD_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub k: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Lloyd iterations used to initialize the responsibilities.
    pub lloyd_iters: usize,
}

impl EmConfig {
    pub fn new(k: usize, lambda: f64) -> Self {
        Self {
            k,
            lambda,
            max_iters: 100,
            rel_tol: 1e-3,
            lloyd_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmReport {
    /// Negative log-likelihood after the initial M-step and after each iteration.
    pub nll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Per M-step (initial step first): the spectral clamp moved an eigenvalue.
    pub floor_active: Vec<bool>,
    /// Per M-step (initial step first): a dead component was re-seeded.
    pub rescued: Vec<bool>,
}

impl EmReport {
    pub fn final_nll(&self) -> f64 {
        *self.nll_trace.last().expect("trace is never empty")
    }
}

/// Weighted responsibilities, row-major `n × k`, and the NLL of the mixture
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub k: usize,
    pub values: Vec<f64>,
    pub nll: f64,
}

impl Responsibilities {
    /// One-hot responsibilities scaled by the point weights.
    pub fn hard<S: PointSet + ?Sized>(s: &S, assignment: &[usize], k: usize) -> Self {
        let mut values = vec![0.0; s.len() * k];
        for (i, &j) in assignment.iter().enumerate() {
            values[i * k + j] = s.weight(i);
        }
        Self {
            k,
            values,
            nll: f64::NAN,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `η_ij = γ_i · w_j N(x_i | μ_j, Σ_j) / Σ_l w_l N(x_i | μ_l, Σ_l)`.
pub fn e_step<S: PointSet + ?Sized>(s: &S, theta: &GmmParams) -> Result<Responsibilities> {
    Error::check_dim(theta.dim(), s.dim())?;
    let eval = MixtureEval::new(theta)?;
    let k = theta.k();
    let mut values = vec![0.0; s.len() * k];
    let mut log_dens = vec![0.0; s.len()];
    values
        .par_chunks_mut(k)
        .zip(log_dens.par_iter_mut())
        .with_min_len(CHUNK / 8)
        .enumerate()
        .for_each(|(i, (row, ld))| {
            eval.component_terms(s.point(i), row);
            let lse = log_sum_exp(row);
            let gamma = s.weight(i);
            for v in row.iter_mut() {
                *v = gamma * (*v - lse).exp();
            }
            *ld = lse;
        });
    let nll = -par_sum(s.len(), |i| {
        let w = s.weight(i);
        if w == 0.0 {
            0.0
        } else {
            w * log_dens[i]
        }
    });
    if !nll.is_finite() {
        return Err(Error::Numerical(
            "negative log-likelihood is not finite".into(),
        ));
    }
    Ok(Responsibilities { k, values, nll })
}

/// Result of one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub theta: GmmParams,
    pub floor_active: bool,
    pub rescued: Vec<usize>,
}

/// Weighted M-step. `previous` is the mixture that produced `eta`; it ranks
/// points when re-seeding dead components (squared distance to the live means
/// is used when absent).
pub fn m_step<S: PointSet + ?Sized>(
    s: &S,
    eta: &Responsibilities,
    lambda: f64,
    previous: Option<&GmmParams>,
) -> Result<MStep> {
    check_lambda(lambda)?;
    let (n, d, k) = (s.len(), s.dim(), eta.k);
    if eta.len() != n {
        return Err(Error::param(format!(
            "{} responsibility rows for {n} points",
            eta.len()
        )));
    }

    // pass 1: masses and weighted coordinate sums
    let first = par_sum_vec(n, k * (d + 1), |i, acc| {
        let x = s.point(i);
        for (j, &e) in eta.row(i).iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            let base = j * (d + 1);
            acc[base] += e;
            for (a, v) in acc[base + 1..base + 1 + d].iter_mut().zip(x) {
                *a += e * v;
            }
        }
    });
    let z: Vec<f64> = (0..k).map(|j| first[j * (d + 1)]).collect();
    let total: f64 = z.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("responsibilities carry no mass".into()));
    }
    let live: Vec<bool> = z.iter().map(|&zj| zj > DEAD_FRACTION * total).collect();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let base = j * (d + 1);
            first[base + 1..base + 1 + d]
                .iter()
                .map(|v| v / z[j])
                .collect()
        })
        .collect();

    // pass 2: scatter about the final means (upper triangle)
    let tri = d * (d + 1) / 2;
    let scatter = par_sum_vec(n, k * tri, |i, acc| {
        let x = s.point(i);
        for (j, &e) in eta.row(i).iter().enumerate() {
            if e == 0.0 || !live[j] {
                continue;
            }
            let mu = &means[j];
            let mut t = j * tri;
            for r in 0..d {
                let dr = x[r] - mu[r];
                for c in r..d {
                    acc[t] += e * dr * (x[c] - mu[c]);
                    t += 1;
                }
            }
        }
    });

    let mut weights = Vec::with_capacity(k);
    let mut mean_vecs = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let mut floor_active = false;
    for j in 0..k {
        weights.push(z[j] / total);
        if !live[j] {
            mean_vecs.push(DVector::zeros(d));
            covs.push(DMatrix::identity(d, d));
            continue;
        }
        let mut cov = DMatrix::zeros(d, d);
        let mut t = j * tri;
        for r in 0..d {
            for c in r..d {
                cov[(r, c)] = scatter[t] / z[j];
                cov[(c, r)] = cov[(r, c)];
                t += 1;
            }
        }
        for r in 0..d {
            cov[(r, r)] += lambda;
        }
        symmetrize(&mut cov);
        let (cov, clamped) = clamp_covariance_reporting(&cov, lambda)?;
        floor_active |= clamped;
        mean_vecs.push(DVector::from_vec(means[j].clone()));
        covs.push(cov);
    }

    let rescued: Vec<usize> = (0..k).filter(|&j| !live[j]).collect();
    if !rescued.is_empty() {
        rescue_dead(
            s,
            previous,
            lambda,
            &live,
            &mut weights,
            &mut mean_vecs,
            &mut covs,
        )?;
    }
    let theta = GmmParams::new(weights, mean_vecs, covs, lambda)?;
    Ok(MStep {
        theta,
        floor_active,
        rescued,
    })
}

/// Re-seeds each dead component at the worst-fit point with weight `1/(10k)`
/// and the weight-averaged covariance of the live components.
fn rescue_dead<S: PointSet + ?Sized>(
    s: &S,
    previous: Option<&GmmParams>,
    lambda: f64,
    live: &[bool],
    weights: &mut [f64],
    means: &mut [DVector<f64>],
    covs: &mut [DMatrix<f64>],
) -> Result<()> {
    let k = live.len();
    let d = s.dim();
    let live_ids: Vec<usize> = (0..k).filter(|&j| live[j]).collect();
    let scores: Vec<f64> = match previous {
        Some(theta) => {
            let eval = MixtureEval::new(theta)?;
            (0..s.len())
                .into_par_iter()
                .map(|i| s.weight(i) * eval.point_cost(s.point(i)))
                .collect()
        }
        None => (0..s.len())
            .into_par_iter()
            .map(|i| {
                let x = s.point(i);
                let best = live_ids
                    .iter()
                    .map(|&j| {
                        means[j]
                            .iter()
                            .zip(x)
                            .map(|(m, v)| (m - v) * (m - v))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                s.weight(i) * best
            })
            .collect(),
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let live_mass: f64 = live_ids.iter().map(|&j| weights[j]).sum();
    let mut pooled = DMatrix::zeros(d, d);
    if live_mass > 0.0 {
        for &j in &live_ids {
            pooled += &covs[j] * (weights[j] / live_mass);
        }
    } else {
        pooled = DMatrix::identity(d, d);
    }
    symmetrize(&mut pooled);
    let pooled = clamp_covariance_reporting(&pooled, lambda)?.0;

    let dead: Vec<usize> = (0..k).filter(|&j| !live[j]).collect();
    let seed_weight = 1.0 / (10.0 * k as f64);
    let remaining = 1.0 - seed_weight * dead.len() as f64;
    for &j in &live_ids {
        weights[j] = if live_mass > 0.0 {
            weights[j] / live_mass * remaining
        } else {
            remaining / live_ids.len().max(1) as f64
        };
    }
    for (&j, &i) in dead.iter().zip(order.iter()) {
        weights[j] = seed_weight;
        means[j] = DVector::from_column_slice(s.point(i));
        covs[j] = pooled.clone();
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(())
}

fn count_distinct_positive<S: PointSet + ?Sized>(s: &S, limit: usize) -> usize {
    let mut seen = HashSet::new();
    for i in 0..s.len() {
        if s.weight(i) > 0.0 {
            seen.insert(s.point(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

fn check_config(cfg: &EmConfig) -> Result<()> {
    check_lambda(cfg.lambda)?;
    if cfg.k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if !(cfg.rel_tol >= 0.0) {
        return Err(Error::param("rel_tol must be nonnegative"));
    }
    Ok(())
}

/// EM from weighted k-means initialization.
pub fn em_fit<S: PointSet + ?Sized>(
    s: &S,
    cfg: &EmConfig,
    rng: &mut Rng,
) -> Result<(GmmParams, EmReport)> {
    check_config(cfg)?;
    let distinct = count_distinct_positive(s, cfg.k);
    if distinct < cfg.k {
        return Err(Error::param(format!(
            "k = {} exceeds the {distinct} distinct points with positive weight",
            cfg.k
        )));
    }
    let lloyd = weighted_lloyd(s, cfg.k, cfg.lloyd_iters, rng)?;
    let eta = Responsibilities::hard(s, &lloyd.assignment, cfg.k);
    em_fit_from_responsibilities(s, &eta, cfg)
}

/// EM starting with an M-step on the given responsibilities.
pub fn em_fit_from_responsibilities<S: PointSet + ?Sized>(
    s: &S,
    eta: &Responsibilities,
    cfg: &EmConfig,
) -> Result<(GmmParams, EmReport)> {
    check_config(cfg)?;
    let init = m_step(s, eta, cfg.lambda, None)?;
    run_em(s, init, cfg, &mut |_| {})
}

/// EM starting from a given mixture (its first E-step uses `init`).
pub fn em_fit_from<S: PointSet + ?Sized>(
    s: &S,
    init: GmmParams,
    cfg: &EmConfig,
) -> Result<(GmmParams, EmReport)> {
    em_fit_traced(s, init, cfg, &mut |_| {})
}

/// As [`em_fit_from`], calling `observe` with every iterate (the initial
/// mixture included).
pub fn em_fit_traced<S: PointSet + ?Sized>(
    s: &S,
    init: GmmParams,
    cfg: &EmConfig,
    observe: &mut dyn FnMut(&GmmParams),
) -> Result<(GmmParams, EmReport)> {
    check_config(cfg)?;
    Error::check_dim(init.dim(), s.dim())?;
    if init.k() != cfg.k {
        return Err(Error::param(
            "initial mixture has the wrong number of components",
        ));
    }
    let start = MStep {
        theta: init,
        floor_active: false,
        rescued: Vec::new(),
    };
    run_em(s, start, cfg, observe)
}

fn run_em<S: PointSet + ?Sized>(
    s: &S,
    start: MStep,
    cfg: &EmConfig,
    observe: &mut dyn FnMut(&GmmParams),
) -> Result<(GmmParams, EmReport)> {
    let mut theta = start.theta;
    observe(&theta);
    let mut eta = e_step(s, &theta)?;
    let mut report = EmReport {
        nll_trace: vec![eta.nll],
        iterations: 0,
        converged: false,
        floor_active: vec![start.floor_active],
        rescued: vec![!start.rescued.is_empty()],
    };
    while report.iterations < cfg.max_iters {
        let step = m_step(s, &eta, cfg.lambda, Some(&theta))?;
        theta = step.theta;
        observe(&theta);
        let prev = eta.nll;
        eta = e_step(s, &theta)?;
        report.iterations += 1;
        report.nll_trace.push(eta.nll);
        report.floor_active.push(step.floor_active);
        report.rescued.push(!step.rescued.is_empty());
        if step.rescued.is_empty() && (eta.nll - prev).abs() <= cfg.rel_tol * eta.nll.abs() {
            report.converged = true;
            break;
        }
    }
    Ok((theta, report))
}

#[derive(Debug, Clone)]
pub struct BestFit {
    pub theta: GmmParams,
    pub report: EmReport,
    /// Final NLL of every restart, in restart order.
    pub restart_nlls: Vec<f64>,
    pub best_restart: usize,
}

/// Runs `restarts` independent fits (substreams of `seed`) and keeps the one
/// with the lowest final NLL. Restarts that fail numerically are skipped.
pub fn fit_best_of<S: PointSet + ?Sized>(
    s: &S,
    cfg: &EmConfig,
    restarts: usize,
    seed: u64,
) -> Result<BestFit> {
    if restarts == 0 {
        return Err(Error::param("at least one restart is required"));
    }
    let runs: Vec<Result<(GmmParams, EmReport)>> = (0..restarts)
        .into_par_iter()
        .map(|r| em_fit(s, cfg, &mut rng::substream(seed, &[tag::RESTART, r as u64])))
        .collect();
    let mut best: Option<(usize, GmmParams, EmReport)> = None;
    let mut restart_nlls = Vec::with_capacity(restarts);
    let mut first_err = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok((theta, report)) => {
                let nll = report.final_nll();
                restart_nlls.push(nll);
                if best.as_ref().is_none_or(|(_, _, b)| nll < b.final_nll()) {
                    best = Some((r, theta, report));
                }
            }
            Err(e @ Error::Numerical(_)) => {
                restart_nlls.push(f64::NAN);
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((best_restart, theta, report)) => Ok(BestFit {
            theta,
            report,
            restart_nlls,
            best_restart,
        }),
        None => Err(first_err.expect("a failed restart left an error")),
    }
}
