//! Deterministic reductions and log-domain helpers.
//!
//! Every reduction over points goes through [`par_sum`]: the index range is cut
//! into fixed-size chunks, each chunk is summed pairwise, and the chunk sums are
//! combined pairwise in chunk order. The result depends only on the input, never
//! on the number of rayon workers.

use rayon::prelude::*;

/// Number of points per reduction chunk.
pub const CHUNK: usize = 2048;

const PAIRWISE_BASE: usize = 16;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sums `term(i)` for `i in 0..n` in the fixed chunked order.
pub fn par_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunk_sums: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let values: Vec<f64> = (start..end).map(&term).collect();
            pairwise_sum(&values)
        })
        .collect();
    pairwise_sum(&chunk_sums)
}

/// Vector-valued counterpart of [`par_sum`]: `accumulate(i, acc)` adds point
/// `i`'s contribution into a zeroed accumulator of length `len`; chunk
/// accumulators are combined pairwise in chunk order.
pub fn par_sum_vec<F>(n: usize, len: usize, accumulate: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                accumulate(i, &mut acc);
            }
            acc
        })
        .collect();
    combine_pairwise(chunks, len)
}

fn combine_pairwise(mut parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; len];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("nonempty")
}

/// `ln Σ exp(v)`. Returns `-inf` for an empty slice or when all entries are `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of a slice (mean of the two middle elements for even lengths).
/// NaN entries sort last.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile, `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
