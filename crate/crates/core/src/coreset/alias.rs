//! Vose's alias method: O(m) construction, O(1) draws.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn alias(&self) -> &[usize] {
        &self.alias
    }

    /// Index for two uniforms in `[0, 1)`.
    #[inline]
    pub fn draw(&self, u1: f64, u2: f64) -> usize {
        let m = self.prob.len();
        let i = ((u1 * m as f64) as usize).min(m - 1);
        if u2 < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u1 = rng.random::<f64>();
        let u2 = rng.random::<f64>();
        self.draw(u1, u2)
    }

    /// The distribution encoded by the table.
    pub fn probabilities(&self) -> Vec<f64> {
        let m = self.prob.len() as f64;
        let mut q: Vec<f64> = self.prob.iter().map(|p| p / m).collect();
        for (i, &a) in self.alias.iter().enumerate() {
            q[a] += (1.0 - self.prob[i]) / m;
        }
        q
    }
}

pub fn build_alias_table(q: &[f64]) -> Result<AliasTable> {
    if q.is_empty() {
        return Err(Error::param("alias table needs at least one probability"));
    }
    if let Some(bad) = q.iter().find(|&&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::param(format!("invalid probability {bad}")));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("probabilities sum to {sum}, not 1")));
    }
    let m = q.len();
    let mut scaled: Vec<f64> = q.iter().map(|p| p * m as f64).collect();
    let mut prob = vec![0.0; m];
    let mut alias: Vec<usize> = (0..m).collect();
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| scaled[i] < 1.0);
    while let (Some(&l), Some(&g)) = (small.last(), large.last()) {
        small.pop();
        prob[l] = scaled[l];
        alias[l] = g;
        scaled[g] = (scaled[g] + scaled[l]) - 1.0;
        if scaled[g] < 1.0 {
            large.pop();
            small.push(g);
        }
    }
    // leftovers are 1 up to rounding
    for i in large.into_iter().chain(small) {
        prob[i] = 1.0;
    }
    Ok(AliasTable { prob, alias })
}
