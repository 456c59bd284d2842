//! Streaming merge-reduce tree.
//!
//! Points accumulate in a leaf buffer of `b` points. A full buffer becomes a
//! level-0 coreset; two coresets on the same level are merged and compressed
//! into one on the next level, like incrementing a binary counter. At most one
//! coreset lives on each level.

use std::io::{Read, Write};

use super::{compress_if_larger, epsilon_schedule, leaf_coreset, merge_coresets};
use crate::coreset::{Coreset, CoresetMeta, CoresetParams, SeedingMode};
use crate::dataset::{read_binary, write_binary, DataSet, PointSet};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

const CHECKPOINT_MAGIC: &[u8; 4] = b"GMCT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub k: usize,
    /// Size of every leaf and intermediate coreset.
    pub m_leaf: usize,
    pub delta: f64,
    pub seeding: SeedingMode,
    /// Target ε for the final coreset.
    pub epsilon: f64,
    /// Initial guess of the stream length; doubled whenever exceeded.
    pub n_estimate: u64,
    pub seed: u64,
}

impl TreeParams {
    pub fn new(k: usize, m_leaf: usize, seed: u64) -> Self {
        Self {
            k,
            m_leaf,
            delta: 0.1,
            seeding: SeedingMode::KMeansPlusPlus,
            epsilon: 0.5,
            n_estimate: 1 << 20,
            seed,
        }
    }

    /// Leaf block size `b = max(2·m_leaf, 1024)`.
    pub fn block_size(&self) -> usize {
        (2 * self.m_leaf).max(1024)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m_leaf == 0 {
            return Err(Error::param("k and m_leaf must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        epsilon_schedule(self.epsilon, self.n_estimate.max(2)).map(|_| ())
    }
}

/// Outcome of [`CoresetTree::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct FinalizeReport {
    /// Levels that held a coreset, the partial leaf included.
    pub levels_merged: usize,
    /// Whether the union was compressed (it is kept whole when small enough).
    pub compressed: bool,
    /// Composed ε of the returned coreset.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoresetTree {
    params: TreeParams,
    dim: usize,
    levels: Vec<Option<Coreset>>,
    buffer_coords: Vec<f64>,
    buffer_weights: Vec<f64>,
    n_seen: u64,
    blocks: u64,
    n_estimate: u64,
    eps_prime: f64,
    high_water: usize,
}

impl CoresetTree {
    pub fn new(params: TreeParams, dim: usize) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        let n_estimate = params.n_estimate.max(2);
        Ok(Self {
            params,
            dim,
            levels: Vec::new(),
            buffer_coords: Vec::new(),
            buffer_weights: Vec::new(),
            n_seen: 0,
            blocks: 0,
            n_estimate,
            eps_prime: epsilon_schedule(params.epsilon, n_estimate)?,
            high_water: 0,
        })
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn block_size(&self) -> usize {
        self.params.block_size()
    }

    /// Current per-level budget.
    pub fn eps_prime(&self) -> f64 {
        self.eps_prime
    }

    pub fn levels(&self) -> &[Option<Coreset>] {
        &self.levels
    }

    /// Indices of occupied levels, ascending.
    pub fn occupied_levels(&self) -> Vec<usize> {
        (0..self.levels.len())
            .filter(|&i| self.levels[i].is_some())
            .collect()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_weights.len()
    }

    /// Points currently held: buffer plus every stored coreset.
    pub fn stored_points(&self) -> usize {
        self.buffer_len()
            + self
                .levels
                .iter()
                .flatten()
                .map(PointSet::len)
                .sum::<usize>()
    }

    /// Largest [`Self::stored_points`] seen so far, transient carries included.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn insert(&mut self, x: &[f64]) -> Result<()> {
        self.insert_weighted(x, 1.0)
    }

    /// Appends one point; a full buffer triggers a leaf build and carries.
    pub fn insert_weighted(&mut self, x: &[f64], w: f64) -> Result<()> {
        Error::check_dim(self.dim, x.len())?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite coordinate {v}")));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::data(format!("invalid weight {w}")));
        }
        self.buffer_coords.extend_from_slice(x);
        self.buffer_weights.push(w);
        self.n_seen += 1;
        if self.n_seen > self.n_estimate {
            while self.n_estimate < self.n_seen {
                self.n_estimate = self.n_estimate.saturating_mul(2);
            }
            self.eps_prime = epsilon_schedule(self.params.epsilon, self.n_estimate)?;
            log::debug!(
                "stream passed its estimate; n_estimate = {}",
                self.n_estimate
            );
        }
        self.note_memory(0);
        if self.buffer_len() == self.block_size() {
            self.flush_block()?;
        }
        Ok(())
    }

    pub fn extend<S: PointSet + ?Sized>(&mut self, s: &S) -> Result<()> {
        for i in 0..s.len() {
            self.insert_weighted(s.point(i), s.weight(i))?;
        }
        Ok(())
    }

    fn note_memory(&mut self, in_flight: usize) {
        self.high_water = self.high_water.max(self.stored_points() + in_flight);
    }

    fn leaf_params(&self) -> CoresetParams {
        CoresetParams {
            k: self.params.k,
            m: self.params.m_leaf,
            delta: self.params.delta,
            seeding: self.params.seeding,
            epsilon: self.eps_prime,
        }
    }

    fn take_buffer(&mut self) -> Result<Option<DataSet>> {
        let coords = std::mem::take(&mut self.buffer_coords);
        let weights = std::mem::take(&mut self.buffer_weights);
        if !weights.iter().any(|&w| w > 0.0) {
            return Ok(None);
        }
        DataSet::new(coords, weights, self.dim).map(Some)
    }

    fn build_leaf(&mut self, block: &DataSet) -> Result<Coreset> {
        let mut r = rng::substream(self.params.seed, &[tag::LEAF, self.blocks]);
        let mut leaf = leaf_coreset(block, &self.leaf_params(), &mut r)?;
        leaf.meta.source_n = block.len() as u64;
        leaf.meta.level = 0;
        Ok(leaf)
    }

    fn flush_block(&mut self) -> Result<()> {
        let Some(block) = self.take_buffer()? else {
            // an all-zero-weight block contributes nothing
            self.blocks += 1;
            return Ok(());
        };
        let mut carry = self.build_leaf(&block)?;
        // the raw block and its leaf coexist until the block is dropped
        self.note_memory(block.len() + carry.len());
        drop(block);
        let block_index = self.blocks;
        self.blocks += 1;
        let mut level = 0usize;
        loop {
            self.note_memory(carry.len());
            if self.levels.len() <= level {
                self.levels.resize(level + 1, None);
            }
            match self.levels[level].take() {
                None => {
                    self.levels[level] = Some(carry);
                    return Ok(());
                }
                Some(existing) => {
                    let mut merged = merge_coresets(&existing, &carry)?;
                    merged.meta.level = level as u32 + 1;
                    let mut r = rng::substream(
                        self.params.seed,
                        &[tag::COMPRESS, level as u64, block_index],
                    );
                    let mut next = compress_if_larger(merged, &self.leaf_params(), &mut r)?;
                    next.meta.level = level as u32 + 1;
                    carry = next;
                    level += 1;
                }
            }
        }
    }

    /// Merges the partial leaf and every level, then compresses to `m` points
    /// with budget ε/3 when the union is larger than `m`. The tree itself is
    /// left untouched so the stream can continue.
    pub fn finalize(&self, m: usize) -> Result<(Coreset, FinalizeReport)> {
        if self.n_seen == 0 {
            return Err(Error::data("the stream is empty"));
        }
        if m == 0 {
            return Err(Error::param("m must be at least 1"));
        }
        let mut merged = Coreset::empty(self.dim);
        let mut levels_merged = 0;
        let mut scratch = self.clone();
        if let Some(block) = scratch.take_buffer()? {
            let leaf = scratch.build_leaf(&block)?;
            merged = merge_coresets(&merged, &leaf)?;
            levels_merged += 1;
        }
        for c in self.levels.iter().flatten() {
            merged = merge_coresets(&merged, c)?;
            levels_merged += 1;
        }
        if merged.is_empty() {
            return Err(Error::data("the stream carries no positive weight"));
        }
        let params = CoresetParams {
            k: self.params.k,
            m,
            delta: self.params.delta,
            seeding: self.params.seeding,
            epsilon: self.params.epsilon / 3.0,
        };
        let compressed = merged.len() > m;
        let level = merged.meta.level;
        let mut out = compress_if_larger(
            merged,
            &params,
            &mut rng::substream(self.params.seed, &[tag::FINALIZE]),
        )?;
        out.meta.level = level;
        out.meta.m_requested = m;
        let epsilon = out.meta.epsilon_budget;
        Ok((
            out,
            FinalizeReport {
                levels_merged,
                compressed,
                epsilon,
            },
        ))
    }

    /// Serializes the full state; [`Self::load`] restores it exactly.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        let p = &self.params;
        let mut head = Vec::new();
        head.extend_from_slice(CHECKPOINT_MAGIC);
        head.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [p.k as u64, p.m_leaf as u64, p.n_estimate, p.seed] {
            head.extend_from_slice(&v.to_le_bytes());
        }
        for v in [p.delta, p.epsilon] {
            head.extend_from_slice(&v.to_le_bytes());
        }
        head.push(match p.seeding {
            SeedingMode::KMeansPlusPlus => 0,
            SeedingMode::Adaptive => 1,
        });
        head.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in [
            self.n_seen,
            self.blocks,
            self.n_estimate,
            self.high_water as u64,
        ] {
            head.extend_from_slice(&v.to_le_bytes());
        }
        head.extend_from_slice(&self.eps_prime.to_le_bytes());
        head.extend_from_slice(&(self.levels.len() as u64).to_le_bytes());
        w.write_all(&head).map_err(io)?;
        for slot in &self.levels {
            match slot {
                None => w.write_all(&[0]).map_err(io)?,
                Some(c) => {
                    let mut meta = vec![1u8];
                    meta.extend_from_slice(&c.meta.source_n.to_le_bytes());
                    meta.extend_from_slice(&(c.meta.m_requested as u64).to_le_bytes());
                    meta.extend_from_slice(&c.meta.epsilon_budget.to_le_bytes());
                    meta.extend_from_slice(&c.meta.level.to_le_bytes());
                    w.write_all(&meta).map_err(io)?;
                    write_binary(w, c, true)?;
                }
            }
        }
        // the buffer may hold only zero-weight points, which a data set
        // block cannot represent, so it is written raw
        w.write_all(&(self.buffer_len() as u64).to_le_bytes())
            .map_err(io)?;
        let mut raw = Vec::with_capacity((self.buffer_coords.len() + self.buffer_len()) * 8);
        for v in self.buffer_weights.iter().chain(&self.buffer_coords) {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&raw).map_err(io)
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let mut rd = Reader { inner: r };
        if &rd.bytes::<4>()? != CHECKPOINT_MAGIC {
            return Err(Error::parse("checkpoint", "bad magic (expected GMCT)"));
        }
        let version = u32::from_le_bytes(rd.bytes::<4>()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let k = rd.u64()? as usize;
        let m_leaf = rd.u64()? as usize;
        let n_estimate0 = rd.u64()?;
        let seed = rd.u64()?;
        let delta = rd.f64()?;
        let epsilon = rd.f64()?;
        let seeding = match rd.bytes::<1>()?[0] {
            0 => SeedingMode::KMeansPlusPlus,
            1 => SeedingMode::Adaptive,
            other => {
                return Err(Error::parse(
                    "checkpoint",
                    format!("bad seeding tag {other}"),
                ))
            }
        };
        let params = TreeParams {
            k,
            m_leaf,
            delta,
            seeding,
            epsilon,
            n_estimate: n_estimate0,
            seed,
        };
        let dim = rd.u64()? as usize;
        let mut tree = Self::new(params, dim)?;
        tree.n_seen = rd.u64()?;
        tree.blocks = rd.u64()?;
        tree.n_estimate = rd.u64()?;
        tree.high_water = rd.u64()? as usize;
        tree.eps_prime = rd.f64()?;
        let nlevels = rd.u64()? as usize;
        if nlevels > 64 {
            return Err(Error::parse(
                "checkpoint",
                format!("implausible level count {nlevels}"),
            ));
        }
        for _ in 0..nlevels {
            match rd.bytes::<1>()?[0] {
                0 => tree.levels.push(None),
                1 => {
                    let meta = CoresetMeta {
                        source_n: rd.u64()?,
                        m_requested: rd.u64()? as usize,
                        epsilon_budget: rd.f64()?,
                        level: u32::from_le_bytes(rd.bytes::<4>()?),
                    };
                    let block = read_binary(rd.inner)?;
                    Error::check_dim(dim, block.dim())?;
                    let (coords, weights, d) = block.into_parts();
                    tree.levels
                        .push(Some(Coreset::new(coords, weights, d, meta)?));
                }
                other => return Err(Error::parse("checkpoint", format!("bad slot tag {other}"))),
            }
        }
        let buffered = rd.u64()? as usize;
        if buffered >= tree.block_size() {
            return Err(Error::parse("checkpoint", "buffer exceeds the block size"));
        }
        for _ in 0..buffered {
            tree.buffer_weights.push(rd.f64()?);
        }
        for _ in 0..buffered * dim {
            tree.buffer_coords.push(rd.f64()?);
        }
        Ok(tree)
    }
}

struct Reader<'a, R> {
    inner: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::parse("checkpoint", format!("truncated input ({e})")))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.bytes::<8>()?);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::parse("checkpoint", "non-finite value"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreset::build_coreset;
    use rand::Rng as _;

    fn stream(n: usize, d: usize, seed: u64) -> DataSet {
        let mut r = rng::from_seed(seed);
        DataSet::from_coords((0..n * d).map(|_| r.random_range(-5.0..5.0)).collect(), d).unwrap()
    }

    fn params() -> TreeParams {
        TreeParams::new(3, 100, 42)
    }

    #[test]
    fn binary_counter_occupancy() {
        let b = params().block_size();
        assert_eq!(b, 1024);
        let x = stream(4 * b, 2, 1);
        let mut t = CoresetTree::new(params(), 2).unwrap();
        for i in 0..x.len() {
            t.insert(x.point(i)).unwrap();
            let blocks = (i + 1) / b;
            if (i + 1) % b == 0 {
                let expected: Vec<usize> = (0..8).filter(|bit| blocks >> bit & 1 == 1).collect();
                assert_eq!(t.occupied_levels(), expected, "after {blocks} blocks");
                assert_eq!(t.buffer_len(), 0);
            }
        }
        assert_eq!(t.occupied_levels(), vec![2]);
        let top = t.levels()[2].as_ref().unwrap();
        assert_eq!(top.meta.level, 2);
        assert_eq!(top.meta.source_n, 4 * b as u64);
    }

    #[test]
    fn single_block_matches_direct_build() {
        let p = params();
        let x = stream(p.block_size(), 2, 2);
        let mut t = CoresetTree::new(p, 2).unwrap();
        t.extend(&x).unwrap();
        let (c, report) = t.finalize(500).unwrap();
        assert!(!report.compressed);
        let cp = CoresetParams {
            k: p.k,
            m: p.m_leaf,
            delta: p.delta,
            seeding: p.seeding,
            epsilon: t.eps_prime(),
        };
        let direct = build_coreset(&x, &cp, &mut rng::substream(p.seed, &[tag::LEAF, 0])).unwrap();
        assert_eq!(c.coords(), direct.coords());
        assert_eq!(c.weights(), direct.weights());
        assert!((report.epsilon - t.eps_prime()).abs() < 1e-15);
    }

    #[test]
    fn partial_block_and_empty_stream() {
        let t = CoresetTree::new(params(), 2).unwrap();
        assert!(t.finalize(10).is_err());
        let mut t = CoresetTree::new(params(), 2).unwrap();
        let x = stream(1500, 2, 3);
        t.extend(&x).unwrap();
        let (c, report) = t.finalize(120).unwrap();
        assert_eq!(report.levels_merged, 2);
        assert!(c.len() <= 120);
        let total: f64 = c.weights().iter().sum();
        assert!((total / 1500.0 - 1.0).abs() < 0.3, "{total}");
        assert!(t.insert(&[1.0]).is_err());
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let x = stream(3000, 2, 4);
        let mut a = CoresetTree::new(params(), 2).unwrap();
        for i in 0..2100 {
            a.insert(x.point(i)).unwrap();
        }
        let mut bytes = Vec::new();
        a.save(&mut bytes).unwrap();
        let mut b = CoresetTree::load(&mut bytes.as_slice()).unwrap();
        assert_eq!(a, b);
        for i in 2100..3000 {
            a.insert(x.point(i)).unwrap();
            b.insert(x.point(i)).unwrap();
        }
        assert_eq!(a.finalize(80).unwrap(), b.finalize(80).unwrap());
        bytes[0] = b'X';
        assert!(CoresetTree::load(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn estimate_doubles() {
        let mut p = params();
        p.n_estimate = 1024;
        let mut t = CoresetTree::new(p, 1).unwrap();
        let e0 = t.eps_prime();
        for i in 0..1500 {
            t.insert(&[i as f64]).unwrap();
        }
        assert!((t.eps_prime() - p.epsilon / (6.0 * 11.0)).abs() < 1e-15);
        assert!(t.eps_prime() < e0);
    }
}
