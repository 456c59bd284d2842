//! Point sets, squared-distance geometry and Voronoi partitions.

mod io;
mod synth;

pub use io::{
    load_points, read_binary, read_csv, save_points, save_weighted, write_binary, write_csv,
    Format, PointStream,
};
pub use synth::{generate_gmm_sample, preset, Preset};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{par_sum, sq_dist, CHUNK};

/// Read access to a weighted point set stored row-major.
pub trait PointSet: Sync {
    fn dim(&self) -> usize;
    fn coords(&self) -> &[f64];
    fn weights(&self) -> &[f64];

    fn len(&self) -> usize {
        self.weights().len()
    }

    fn is_empty(&self) -> bool {
        self.weights().is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords()[i * d..(i + 1) * d]
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights()[i]
    }

    fn total_weight(&self) -> f64 {
        let w = self.weights();
        par_sum(w.len(), |i| w[i])
    }

    /// Number of points carrying positive weight.
    fn positive_count(&self) -> usize {
        self.weights().iter().filter(|&&w| w > 0.0).count()
    }
}

/// An immutable weighted point set in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    coords: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl DataSet {
    /// Validates and wraps row-major coordinates and per-point weights.
    pub fn new(coords: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::data("dimension must be at least 1"));
        }
        if weights.is_empty() {
            return Err(Error::data("data set is empty"));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::data(format!(
                "{} coordinates do not form {} rows of dimension {}",
                coords.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::data(format!(
                "non-finite coordinate in row {}",
                i / dim
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::data(format!(
                "invalid weight {} in row {i}",
                weights[i]
            )));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::data("all weights are zero"));
        }
        Ok(Self {
            coords,
            weights,
            dim,
        })
    }

    /// Unit-weight data set.
    pub fn from_coords(coords: Vec<f64>, dim: usize) -> Result<Self> {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        Self::new(coords, vec![1.0; n], dim)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::data(format!(
                    "row {i} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        Self::from_coords(coords, dim)
    }

    /// Rows `indices` (in that order), keeping their weights.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        Self::new(coords, weights, self.dim)
    }

    /// Same points with every weight replaced by `weight`.
    pub fn with_uniform_weight(&self, weight: f64) -> Result<Self> {
        Self::new(self.coords.clone(), vec![weight; self.len()], self.dim)
    }

    /// Expands integer weights into repeated unit-weight rows.
    pub fn expand_integer_weights(&self) -> Result<Self> {
        let mut coords = Vec::new();
        for i in 0..self.len() {
            let w = self.weights[i];
            if w.fract() != 0.0 {
                return Err(Error::data(format!(
                    "weight {w} in row {i} is not an integer"
                )));
            }
            for _ in 0..w as usize {
                coords.extend_from_slice(self.point(i));
            }
        }
        Self::from_coords(coords, self.dim)
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>, usize) {
        (self.coords, self.weights, self.dim)
    }

    /// Per-coordinate weighted mean.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let total = self.total_weight();
        (0..self.dim)
            .map(|c| {
                par_sum(self.len(), |i| {
                    self.weights[i] * self.coords[i * self.dim + c]
                }) / total
            })
            .collect()
    }
}

impl PointSet for DataSet {
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

/// A nonempty set of centers in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Centers {
    coords: Vec<f64>,
    dim: usize,
}

impl Centers {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::param(format!(
                "{} center coordinates do not form rows of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { coords, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::param("center rows have differing dimensions"));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub(crate) fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }
}

/// Index of the nearest center (lowest index on ties) and the squared distance.
pub fn nearest_center(x: &[f64], centers: &Centers) -> Result<(usize, f64)> {
    Error::check_dim(centers.dim(), x.len())?;
    Ok(nearest_unchecked(x, centers))
}

#[inline]
pub(crate) fn nearest_unchecked(x: &[f64], centers: &Centers) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d2 = sq_dist(x, c);
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    best
}

/// Weighted quantization cost `Σ w(x)·d(x, B)²`.
pub fn phi<S: PointSet + ?Sized>(x: &S, centers: &Centers) -> Result<f64> {
    Error::check_dim(centers.dim(), x.dim())?;
    Ok(par_sum(x.len(), |i| {
        x.weight(i) * nearest_unchecked(x.point(i), centers).1
    }))
}

/// Assignment of points to their nearest centers with per-cell statistics.
///
/// Cell sizes count points; `cell_weights` carries the weighted counts used by
/// recursive coreset construction. Costs are weight-weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiPartition {
    pub assignment: Vec<usize>,
    pub sq_dists: Vec<f64>,
    pub cell_sizes: Vec<usize>,
    pub cell_weights: Vec<f64>,
    pub cell_costs: Vec<f64>,
    pub total_cost: f64,
}

impl VoronoiPartition {
    pub fn num_cells(&self) -> usize {
        self.cell_sizes.len()
    }

    /// Number of cells with positive weight.
    pub fn nonempty_cells(&self) -> usize {
        self.cell_weights.iter().filter(|&&w| w > 0.0).count()
    }
}

pub fn voronoi_partition<S: PointSet + ?Sized>(
    x: &S,
    centers: &Centers,
) -> Result<VoronoiPartition> {
    Error::check_dim(centers.dim(), x.dim())?;
    let nearest: Vec<(usize, f64)> = (0..x.len())
        .into_par_iter()
        .with_min_len(CHUNK / 4)
        .map(|i| nearest_unchecked(x.point(i), centers))
        .collect();
    let (assignment, sq_dists): (Vec<usize>, Vec<f64>) = nearest.into_iter().unzip();

    let beta = centers.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); beta];
    for (i, &j) in assignment.iter().enumerate() {
        members[j].push(i);
    }
    let cell_sizes = members.iter().map(Vec::len).collect();
    let cell_weights = members
        .iter()
        .map(|m| par_sum(m.len(), |t| x.weight(m[t])))
        .collect();
    let cell_costs = members
        .iter()
        .map(|m| par_sum(m.len(), |t| x.weight(m[t]) * sq_dists[m[t]]))
        .collect();
    let total_cost = par_sum(x.len(), |i| x.weight(i) * sq_dists[i]);
    Ok(VoronoiPartition {
        assignment,
        sq_dists,
        cell_sizes,
        cell_weights,
        cell_costs,
        total_cost,
    })
}
