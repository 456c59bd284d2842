//! Sensitivity upper bounds from a bicriteria solution.
//!
//! For `x` in the Voronoi cell `X_j` of the bicriteria centers,
//!
//! ```text
//! s(x) = α·d(x,B)² + (2α/|X_j|)·Σ_{X_j} d(·,B)² + (2/|X_j|)·Σ_X d(·,B)²
//! ```
//!
//! with all counts and sums weight-weighted. Summed over the set this gives
//! exactly `(3α + 2β)·φ(X, B)`, β being the number of nonempty cells. The
//! proof-side form multiplies `s` by `2W/(λ²·φ)`, which leaves the sampling
//! distribution unchanged and totals `(6α + 4β)/λ²` on average.

use crate::dataset::{PointSet, VoronoiPartition};
use crate::error::{Error, Result};
use crate::gmm::{GmmParams, MixtureEval};
use crate::numeric::par_sum;
use crate::seeding::Bicriteria;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityScores {
    /// Unnormalized per-point scores.
    pub s: Vec<f64>,
    /// Sampling distribution `q(x) ∝ w(x)·s(x)`.
    pub q: Vec<f64>,
    /// `Σ w(x)·s(x)`.
    pub total_unnormalized: f64,
    pub alpha: f64,
    /// Nonempty Voronoi cells.
    pub beta: usize,
    /// `φ(X, B)`, weight-weighted.
    pub phi: f64,
    pub total_weight: f64,
    /// Weighted size of each point's cell.
    pub(crate) cell_weight_of_point: Vec<f64>,
}

impl SensitivityScores {
    /// `(6α + 4β)/λ²`.
    pub fn total_sensitivity_bound(&self, lambda: f64) -> f64 {
        (6.0 * self.alpha + 4.0 * self.beta as f64) / (lambda * lambda)
    }

    /// `(4α + 2β)/λ²`, the constant quoted in the size-bound derivation; kept
    /// for diagnostics next to [`Self::total_sensitivity_bound`].
    pub fn alternate_sensitivity_bound(&self, lambda: f64) -> f64 {
        (4.0 * self.alpha + 2.0 * self.beta as f64) / (lambda * lambda)
    }

    /// Relative deviation of `Σ w·s` from `(3α + 2β)·φ`.
    pub fn identity_residual(&self) -> f64 {
        let expected = (3.0 * self.alpha + 2.0 * self.beta as f64) * self.phi;
        if expected == 0.0 {
            self.total_unnormalized.abs()
        } else {
            (self.total_unnormalized - expected).abs() / expected
        }
    }
}

pub fn sensitivity_scores<S: PointSet + ?Sized>(
    x: &S,
    bicriteria: &Bicriteria,
    partition: &VoronoiPartition,
) -> Result<SensitivityScores> {
    let n = x.len();
    if partition.assignment.len() != n {
        return Err(Error::param("partition does not match the data set"));
    }
    if partition.num_cells() != bicriteria.beta() {
        return Err(Error::param(
            "partition was not computed against these centers",
        ));
    }
    let alpha = bicriteria.alpha;
    let phi = partition.total_cost;
    let cell_weight_of_point: Vec<f64> = partition
        .assignment
        .iter()
        .map(|&j| partition.cell_weights[j])
        .collect();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let j = partition.assignment[i];
            let wj = partition.cell_weights[j];
            let own = alpha * partition.sq_dists[i];
            if wj > 0.0 {
                own + (2.0 * alpha * partition.cell_costs[j] + 2.0 * phi) / wj
            } else {
                own
            }
        })
        .collect();
    let total_unnormalized = par_sum(n, |i| x.weight(i) * s[i]);
    let total_weight = x.total_weight();
    let q = if total_unnormalized > 0.0 {
        (0..n)
            .map(|i| x.weight(i) * s[i] / total_unnormalized)
            .collect()
    } else {
        (0..n).map(|i| x.weight(i) / total_weight).collect()
    };
    Ok(SensitivityScores {
        s,
        q,
        total_unnormalized,
        alpha,
        beta: partition.nonempty_cells(),
        phi,
        total_weight,
        cell_weight_of_point,
    })
}

/// Per-point bound in its proof form, `W·(2/λ²)·s(x)/φ`. When `φ = 0` only the
/// cell-size term survives: `(2/λ²)·2W/|X_j|`.
pub fn normalized_sensitivity_bound(scores: &SensitivityScores, lambda: f64) -> Vec<f64> {
    let scale = 2.0 / (lambda * lambda);
    let w = scores.total_weight;
    if scores.phi > 0.0 {
        scores
            .s
            .iter()
            .map(|s| w * scale * s / scores.phi)
            .collect()
    } else {
        scores
            .cell_weight_of_point
            .iter()
            .map(|&wj| if wj > 0.0 { w * scale * 2.0 / wj } else { 0.0 })
            .collect()
    }
}

/// Empirical sensitivities over a finite set of mixtures:
/// `max_θ W·f_θ(x) / Σ w·f_θ`. Every mixture must lie in the band for `lambda`.
pub fn brute_force_sensitivity<S: PointSet + ?Sized>(
    x: &S,
    grid: &[GmmParams],
    lambda: f64,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::param("mixture grid is empty"));
    }
    let total_weight = x.total_weight();
    let mut best = vec![f64::NEG_INFINITY; x.len()];
    for (g, theta) in grid.iter().enumerate() {
        Error::check_dim(x.dim(), theta.dim())?;
        if theta.lambda() < lambda * (1.0 - 1e-12) {
            return Err(Error::param(format!(
                "grid mixture {g} uses lambda {} below the required {lambda}",
                theta.lambda()
            )));
        }
        let eval = MixtureEval::new(theta)?;
        let f: Vec<f64> = (0..x.len()).map(|i| eval.point_cost(x.point(i))).collect();
        let total = par_sum(x.len(), |i| x.weight(i) * f[i]);
        if total <= 0.0 {
            continue;
        }
        for (b, fi) in best.iter_mut().zip(&f) {
            *b = b.max(total_weight * fi / total);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{voronoi_partition, Centers, DataSet};
    use crate::rng;
    use crate::seeding::kmeanspp_seed;
    use rand::Rng as _;

    fn bicriteria_at(centers: Centers, alpha: f64, x: &DataSet) -> Bicriteria {
        let cost = crate::dataset::phi(x, &centers).unwrap();
        Bicriteria {
            centers,
            alpha,
            cost,
        }
    }

    #[test]
    fn point_mass_falls_back_to_uniform() {
        let x = DataSet::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let b = bicriteria_at(Centers::from_rows(&[vec![1.0, 1.0]]).unwrap(), 3.0, &x);
        let p = voronoi_partition(&x, &b.centers).unwrap();
        let s = sensitivity_scores(&x, &b, &p).unwrap();
        assert!(s.q.iter().all(|&q| (q - 0.2).abs() < 1e-15));
        assert_eq!(s.total_unnormalized, 0.0);
    }

    #[test]
    fn single_cell_reduces() {
        let x = DataSet::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![-2.0]]).unwrap();
        let alpha = 5.0;
        let b = bicriteria_at(Centers::from_rows(&[vec![0.5]]).unwrap(), alpha, &x);
        let p = voronoi_partition(&x, &b.centers).unwrap();
        let s = sensitivity_scores(&x, &b, &p).unwrap();
        let phi = b.cost;
        for i in 0..4 {
            let d2 = (x.point(i)[0] - 0.5f64).powi(2);
            let expected = alpha * d2 + (2.0 * alpha + 2.0) / 4.0 * phi;
            assert!((s.s[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn total_score_identity_on_random_instance() {
        let mut r = rng::from_seed(1);
        let x =
            DataSet::from_coords((0..600).map(|_| r.random_range(-3.0..3.0)).collect(), 3).unwrap();
        let b = kmeanspp_seed(&x, 6, &mut r).unwrap();
        let p = voronoi_partition(&x, &b.centers).unwrap();
        let s = sensitivity_scores(&x, &b, &p).unwrap();
        // first term totals αφ, second 2αφ, third 2βφ
        let mut first = 0.0;
        let mut second = 0.0;
        let mut third = 0.0;
        for j in 0..p.num_cells() {
            let members: Vec<usize> = (0..x.len()).filter(|&i| p.assignment[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            let cell_cost: f64 = members.iter().map(|&i| p.sq_dists[i]).sum();
            for &i in &members {
                first += b.alpha * p.sq_dists[i];
                second += 2.0 * b.alpha * cell_cost / members.len() as f64;
                third += 2.0 * p.total_cost / members.len() as f64;
            }
        }
        let total: f64 = s.s.iter().sum();
        assert!((total - (first + second + third)).abs() <= 1e-9 * total);
        assert!(s.identity_residual() <= 1e-9);
        let q_sum: f64 = s.q.iter().sum();
        assert!((q_sum - 1.0).abs() <= 1e-12);
        assert!(s.q.iter().all(|&q| q > 0.0));
    }

    #[test]
    fn normalized_total_matches_closed_form() {
        let mut r = rng::from_seed(2);
        let x =
            DataSet::from_coords((0..400).map(|_| r.random_range(-3.0..3.0)).collect(), 2).unwrap();
        let b = kmeanspp_seed(&x, 4, &mut r).unwrap();
        let p = voronoi_partition(&x, &b.centers).unwrap();
        let s = sensitivity_scores(&x, &b, &p).unwrap();
        let lambda = 0.3;
        let bound = normalized_sensitivity_bound(&s, lambda);
        let avg: f64 = bound.iter().sum::<f64>() / x.len() as f64;
        let expected = s.total_sensitivity_bound(lambda);
        assert!((avg - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn symmetric_pair_has_equal_bounds() {
        let x = DataSet::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = bicriteria_at(Centers::from_rows(&[vec![0.0, 0.0]]).unwrap(), 1.0, &x);
        let p = voronoi_partition(&x, &b.centers).unwrap();
        let s = sensitivity_scores(&x, &b, &p).unwrap();
        let bound = normalized_sensitivity_bound(&s, 1.0 - 1e-12);
        assert!((bound[0] - bound[1]).abs() < 1e-12);
    }

    #[test]
    fn scaling_scores_does_not_change_q() {
        let mut r = rng::from_seed(5);
        let x =
            DataSet::from_coords((0..100).map(|_| r.random_range(-3.0..3.0)).collect(), 2).unwrap();
        let b = kmeanspp_seed(&x, 3, &mut r).unwrap();
        let p = voronoi_partition(&x, &b.centers).unwrap();
        let s = sensitivity_scores(&x, &b, &p).unwrap();
        let scaled: Vec<f64> = s.s.iter().map(|v| v * 7.5).collect();
        let total: f64 = scaled.iter().sum();
        for (i, q) in s.q.iter().enumerate() {
            assert!((q - scaled[i] / total).abs() < 1e-15);
        }
    }

    #[test]
    fn brute_force_symmetric_and_average() {
        let x = DataSet::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let theta = GmmParams::from_rows(
            vec![1.0],
            &[vec![0.0, 0.0]],
            &[vec![1.0, 0.0, 0.0, 1.0]],
            0.1,
        )
        .unwrap();
        let sigma = brute_force_sensitivity(&x, std::slice::from_ref(&theta), 0.1).unwrap();
        assert!(sigma.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(brute_force_sensitivity(&x, std::slice::from_ref(&theta), 0.5).is_err());
        assert!(brute_force_sensitivity(&x, &[], 0.1).is_err());

        let far = GmmParams::from_rows(
            vec![1.0],
            &[vec![3.0, 0.2]],
            &[vec![1.0, 0.0, 0.0, 1.0]],
            0.1,
        )
        .unwrap();
        let sigma = brute_force_sensitivity(&x, &[far], 0.1).unwrap();
        let mean: f64 = sigma.iter().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }
}
