//! Bicriteria k-means approximations: weighted k-means++ (D² sampling),
//! best-of-p selection, adaptive halving, and weighted Lloyd refinement.
//!
//! Weighted points behave as copies of unweighted points: every draw is
//! proportional to `w(x)` (first center) or `w(x)·d²(x, B)` (later centers).

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::{nearest_unchecked, phi, voronoi_partition, Centers, PointSet};
use crate::error::{Error, Result};
use crate::numeric::{par_sum, sq_dist, CHUNK};
use crate::rng::{self, tag, Rng};

/// A set of β centers with its quantization cost and assumed factor α.
#[derive(Debug, Clone, PartialEq)]
pub struct Bicriteria {
    pub centers: Centers,
    pub alpha: f64,
    pub cost: f64,
}

impl Bicriteria {
    pub fn beta(&self) -> usize {
        self.centers.len()
    }
}

/// `16·(log₂ k + 2)`, the factor assumed for a best-of-p k-means++ solution.
pub fn kmeanspp_alpha(k: usize) -> f64 {
    16.0 * ((k as f64).log2() + 2.0)
}

/// `⌈log₂(1/δ)⌉`, at least one run.
pub fn seeding_runs(delta: f64) -> Result<usize> {
    check_delta(delta)?;
    Ok(((1.0 / delta).log2().ceil() as usize).max(1))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "delta must lie in (0, 1), got {delta}"
        )))
    }
}

/// Index drawn with probability `mass(i) / total`. Falls back to the last
/// index with positive mass when rounding leaves the target unreached.
fn draw_proportional(n: usize, mass: impl Fn(usize) -> f64, total: f64, rng: &mut Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for i in 0..n {
        let m = mass(i);
        if m > 0.0 {
            acc += m;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

/// Weighted k-means++ seeding.
pub fn kmeanspp_seed<S: PointSet + ?Sized>(x: &S, k: usize, rng: &mut Rng) -> Result<Bicriteria> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::param(format!("k = {k} must lie in 1..={n}")));
    }
    let total_w = x.total_weight();
    if total_w <= 0.0 {
        return Err(Error::data("no point carries positive weight"));
    }
    let first = draw_proportional(n, |i| x.weight(i), total_w, rng);
    let mut centers = Centers::new(x.point(first).to_vec(), x.dim())?;
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(CHUNK / 4)
        .map(|i| sq_dist(x.point(i), x.point(first)))
        .collect();

    while centers.len() < k {
        let mass = par_sum(n, |i| x.weight(i) * d2[i]);
        let next = if mass > 0.0 {
            draw_proportional(n, |i| x.weight(i) * d2[i], mass, rng)
        } else {
            draw_proportional(n, |i| x.weight(i), total_w, rng)
        };
        let c = x.point(next).to_vec();
        d2.par_iter_mut()
            .with_min_len(CHUNK / 4)
            .enumerate()
            .for_each(|(i, d)| *d = d.min(sq_dist(x.point(i), &c)));
        centers.push(&c);
    }
    let cost = phi(x, &centers)?;
    Ok(Bicriteria {
        centers,
        alpha: kmeanspp_alpha(k),
        cost,
    })
}

/// The `run`-th independent k-means++ run of a best-of-p selection keyed by
/// `base_seed`.
pub fn seeding_run<S: PointSet + ?Sized>(
    x: &S,
    k: usize,
    base_seed: u64,
    run: usize,
) -> Result<Bicriteria> {
    let mut r = rng::substream(base_seed, &[tag::SEED_RUN, run as u64]);
    kmeanspp_seed(x, k, &mut r)
}

/// Best (lowest cost) of `⌈log₂(1/δ)⌉` independent k-means++ runs.
pub fn best_seed_of_p<S: PointSet + ?Sized>(
    x: &S,
    k: usize,
    delta: f64,
    rng: &mut Rng,
) -> Result<Bicriteria> {
    let p = seeding_runs(delta)?;
    let base: u64 = rng.random();
    let runs = (0..p)
        .into_par_iter()
        .map(|run| seeding_run(x, k, base, run))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.cost < runs[best].cost {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).expect("p >= 1"))
}

/// Sample size `⌈10·d·k·ln(1/δ)⌉` used by [`adaptive_bicriteria`].
pub fn adaptive_sample_size(d: usize, k: usize, delta: f64) -> Result<usize> {
    check_delta(delta)?;
    Ok(((10 * d * k) as f64 * (1.0 / delta).ln()).ceil().max(1.0) as usize)
}

/// Per-iteration record of the adaptive halving loop.
#[derive(Debug, Clone, PartialEq)]
pub struct HalvingStep {
    pub remaining_before: usize,
    pub removed: usize,
    /// Largest distance to the sample among removed points.
    pub max_removed_dist: f64,
    /// Smallest distance to the sample among retained points.
    pub min_retained_dist: f64,
}

/// Adaptive sampling bicriteria. `alpha` is advisory and defaults to
/// [`kmeanspp_alpha`].
pub fn adaptive_bicriteria<S: PointSet + ?Sized>(
    x: &S,
    k: usize,
    delta: f64,
    alpha: Option<f64>,
    rng: &mut Rng,
) -> Result<Bicriteria> {
    adaptive_bicriteria_traced(x, k, delta, alpha, rng).map(|(b, _)| b)
}

pub fn adaptive_bicriteria_traced<S: PointSet + ?Sized>(
    x: &S,
    k: usize,
    delta: f64,
    alpha: Option<f64>,
    rng: &mut Rng,
) -> Result<(Bicriteria, Vec<HalvingStep>)> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let c = adaptive_sample_size(x.dim(), k, delta)?;
    let mut remaining: Vec<usize> = (0..x.len()).collect();
    let mut chosen: Vec<usize> = Vec::new();
    let mut steps = Vec::new();

    while remaining.len() > c {
        let sample: Vec<usize> = index::sample(rng, remaining.len(), c)
            .into_iter()
            .map(|p| remaining[p])
            .collect();
        let sample_centers = Centers::new(
            sample
                .iter()
                .flat_map(|&i| x.point(i).iter().copied())
                .collect(),
            x.dim(),
        )?;
        let mut by_dist: Vec<(f64, usize)> = remaining
            .par_iter()
            .map(|&i| (nearest_unchecked(x.point(i), &sample_centers).1, i))
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let removed = remaining.len().div_ceil(2);
        steps.push(HalvingStep {
            remaining_before: remaining.len(),
            removed,
            max_removed_dist: by_dist[removed - 1].0,
            min_retained_dist: by_dist.get(removed).map_or(f64::INFINITY, |p| p.0),
        });
        let mut kept: Vec<usize> = by_dist[removed..].iter().map(|p| p.1).collect();
        kept.sort_unstable();
        remaining = kept;
        chosen.extend(sample);
    }
    chosen.extend(remaining);

    let centers = Centers::new(
        chosen
            .iter()
            .flat_map(|&i| x.point(i).iter().copied())
            .collect(),
        x.dim(),
    )?;
    let cost = phi(x, &centers)?;
    Ok((
        Bicriteria {
            centers,
            alpha: alpha.unwrap_or_else(|| kmeanspp_alpha(k)),
            cost,
        },
        steps,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydResult {
    pub assignment: Vec<usize>,
    pub centers: Centers,
    /// Weighted quantization cost of the centers at each iteration, starting
    /// with the seeding.
    pub cost_trace: Vec<f64>,
    pub reseeded: usize,
}

/// Weighted k-means: k-means++ seeding followed by at most `max_iters` Lloyd
/// steps with weighted cell means. Cells that lose all weight are re-seeded
/// at the point with the largest weighted squared distance.
pub fn weighted_lloyd<S: PointSet + ?Sized>(
    x: &S,
    k: usize,
    max_iters: usize,
    rng: &mut Rng,
) -> Result<LloydResult> {
    if k > x.positive_count() {
        return Err(Error::param(format!(
            "k = {k} exceeds the {} points with positive weight",
            x.positive_count()
        )));
    }
    let d = x.dim();
    let mut centers = kmeanspp_seed(x, k, rng)?.centers;
    let mut partition = voronoi_partition(x, &centers)?;
    let mut cost_trace = vec![partition.total_cost];
    let mut reseeded = 0;

    for _ in 0..max_iters {
        // weighted sums per cell, accumulated in fixed chunk order
        let sums = crate::numeric::par_sum_vec(x.len(), k * d, |i, acc| {
            let j = partition.assignment[i];
            let w = x.weight(i);
            for (a, v) in acc[j * d..(j + 1) * d].iter_mut().zip(x.point(i)) {
                *a += w * v;
            }
        });
        let mut next = Vec::with_capacity(k * d);
        let mut empty = Vec::new();
        for j in 0..k {
            let wj = partition.cell_weights[j];
            if wj > 0.0 {
                next.extend(sums[j * d..(j + 1) * d].iter().map(|s| s / wj));
            } else {
                next.extend_from_slice(centers.center(j));
                empty.push(j);
            }
        }
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..x.len()).collect();
            let score = |i: usize| x.weight(i) * partition.sq_dists[i];
            order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
            for (&j, &i) in empty.iter().zip(&order) {
                next[j * d..(j + 1) * d].copy_from_slice(x.point(i));
                reseeded += 1;
            }
        }
        let next = Centers::new(next, d)?;
        if next == centers {
            break;
        }
        centers = next;
        partition = voronoi_partition(x, &centers)?;
        cost_trace.push(partition.total_cost);
    }
    Ok(LloydResult {
        assignment: partition.assignment,
        centers,
        cost_trace,
        reseeded,
    })
}
