//! Merge-and-compress composition of coresets: unions keep the ε budget,
//! re-coreseting multiplies `(1 + ε)` factors. Used by the streaming tree and
//! by partitioned parallel construction.

mod tree;

pub use tree::{CoresetTree, FinalizeReport, TreeParams};

use std::str::FromStr;

use rayon::prelude::*;

use crate::coreset::{build_coreset, Coreset, CoresetMeta, CoresetParams};
use crate::dataset::{DataSet, PointSet};
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

/// `(1 + ε)(1 + δ) − 1`.
pub fn compose_budget(epsilon: f64, delta: f64) -> f64 {
    (1.0 + epsilon) * (1.0 + delta) - 1.0
}

/// `ε / (6·log₂ n)`, the per-level budget of a tree over about `n` points.
pub fn epsilon_schedule(eps_target: f64, n_estimate: u64) -> Result<f64> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::param(format!(
            "epsilon must lie in (0, 1), got {eps_target}"
        )));
    }
    if n_estimate < 2 {
        return Err(Error::param("n_estimate must be at least 2"));
    }
    Ok(eps_target / (6.0 * (n_estimate as f64).log2()))
}

/// Union of two coresets. Source sizes add; the budget is the larger one.
pub fn merge_coresets(a: &Coreset, b: &Coreset) -> Result<Coreset> {
    Error::check_dim(a.dim(), b.dim())?;
    let mut coords = Vec::with_capacity(a.coords().len() + b.coords().len());
    coords.extend_from_slice(a.coords());
    coords.extend_from_slice(b.coords());
    let mut weights = Vec::with_capacity(a.len() + b.len());
    weights.extend_from_slice(a.weights());
    weights.extend_from_slice(b.weights());
    let meta = CoresetMeta {
        source_n: a.meta.source_n + b.meta.source_n,
        m_requested: a.meta.m_requested + b.meta.m_requested,
        epsilon_budget: a.meta.epsilon_budget.max(b.meta.epsilon_budget),
        level: a.meta.level.max(b.meta.level),
    };
    Coreset::new(coords, weights, a.dim(), meta)
}

/// Re-coresets a weighted coreset to `params.m` points. `params.epsilon` is the
/// error of this step and composes with the input's budget. `k` is clamped to
/// the number of points.
pub fn compress_coreset(c: &Coreset, params: &CoresetParams, rng: &mut Rng) -> Result<Coreset> {
    if c.is_empty() {
        return Err(Error::data("cannot compress an empty coreset"));
    }
    let p = CoresetParams {
        k: params.k.min(c.len()),
        ..*params
    };
    let mut out = build_coreset(c, &p, rng)?;
    out.meta = CoresetMeta {
        source_n: c.meta.source_n,
        m_requested: params.m,
        epsilon_budget: compose_budget(c.meta.epsilon_budget, params.epsilon),
        level: c.meta.level,
    };
    Ok(out)
}

/// Compresses only when `c` holds more than `params.m` points; a smaller union
/// is already an exact summary of its parts.
pub(crate) fn compress_if_larger(
    c: Coreset,
    params: &CoresetParams,
    rng: &mut Rng,
) -> Result<Coreset> {
    if c.len() > params.m {
        compress_coreset(&c, params, rng)
    } else {
        Ok(c)
    }
}

/// Leaf coreset of a raw block, `k` clamped to the block size.
pub(crate) fn leaf_coreset<S: PointSet + ?Sized>(
    block: &S,
    params: &CoresetParams,
    rng: &mut Rng,
) -> Result<Coreset> {
    let p = CoresetParams {
        k: params.k.min(block.len()),
        ..*params
    };
    build_coreset(block, &p, rng)
}

/// How per-partition coresets are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelMode {
    /// Pairwise merge-and-compress, `⌈log₂ P⌉` rounds.
    Tree,
    /// Merge everything, compress once.
    UnionThenCompress,
}

impl FromStr for ParallelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(ParallelMode::Tree),
            "union" | "union-then-compress" => Ok(ParallelMode::UnionThenCompress),
            other => Err(Error::param(format!(
                "unknown parallel mode `{other}` (expected tree or union)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelReport {
    pub partitions: usize,
    /// Merge rounds performed (0 for a single partition or union mode).
    pub depth: usize,
    pub partition_sizes: Vec<usize>,
}

/// Sizes of `p` contiguous partitions of `n` points; the first `n mod p` get
/// one extra point.
pub fn partition_sizes(n: usize, p: usize) -> Result<Vec<usize>> {
    if p == 0 {
        return Err(Error::param("partition count must be at least 1"));
    }
    if p > n {
        return Err(Error::param(format!("{p} partitions exceed {n} points")));
    }
    Ok((0..p).map(|i| n / p + usize::from(i < n % p)).collect())
}

/// Per-partition coresets built concurrently, then combined per `mode`.
///
/// Partition `i` uses substream `[PARTITION, i]` of `seed`; reduction steps
/// use `[REDUCE, round, pair]` and the union step `[UNION]`. The result
/// depends only on `(x, partitions, params, seed, mode)`.
pub fn parallel_build(
    x: &DataSet,
    partitions: usize,
    params: &CoresetParams,
    seed: u64,
    mode: ParallelMode,
) -> Result<(Coreset, ParallelReport)> {
    let sizes = partition_sizes(x.len(), partitions)?;
    let mut starts = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for s in &sizes {
        starts.push(acc);
        acc += s;
    }
    let mut level: Vec<Coreset> = (0..partitions)
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = (starts[i]..starts[i] + sizes[i]).collect();
            let part = x.subset(&idx)?;
            leaf_coreset(
                &part,
                params,
                &mut rng::substream(seed, &[tag::PARTITION, i as u64]),
            )
        })
        .collect::<Result<_>>()?;

    let mut depth = 0;
    let result = match mode {
        ParallelMode::Tree => {
            while level.len() > 1 {
                let round = depth as u64;
                let pairs: Vec<Vec<Coreset>> = {
                    let mut v = Vec::new();
                    let mut it = level.into_iter();
                    while let Some(a) = it.next() {
                        match it.next() {
                            Some(b) => v.push(vec![a, b]),
                            None => v.push(vec![a]),
                        }
                    }
                    v
                };
                level = pairs
                    .into_par_iter()
                    .enumerate()
                    .map(|(p, mut pair)| {
                        if pair.len() == 1 {
                            return Ok(pair.pop().expect("one coreset"));
                        }
                        let merged = merge_coresets(&pair[0], &pair[1])?;
                        let mut r = rng::substream(seed, &[tag::REDUCE, round, p as u64]);
                        compress_if_larger(merged, params, &mut r)
                    })
                    .collect::<Result<_>>()?;
                depth += 1;
            }
            level.pop().expect("at least one partition")
        }
        ParallelMode::UnionThenCompress => {
            let mut merged = Coreset::empty(x.dim());
            for c in &level {
                merged = merge_coresets(&merged, c)?;
            }
            compress_if_larger(merged, params, &mut rng::substream(seed, &[tag::UNION]))?
        }
    };
    Ok((
        result,
        ParallelReport {
            partitions,
            depth,
            partition_sizes: sizes,
        },
    ))
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::param("workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
