//! Local Outlier Factor, novelty style: queries are scored against the fitted
//! references and never join their neighborhoods.
//!
//! Neighborhoods include every point at exactly the k-distance, so they can be
//! larger than k. Exact duplicates collapse reach distances to zero; their
//! density is the explicit [`Density::Infinite`] rather than a division by zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Verdict;
use crate::error::{check_dim, Error, Result};
use crate::window::ScalingParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LofConfig {
    pub k: usize,
    pub factor_threshold: f64,
}

impl Default for LofConfig {
    fn default() -> Self {
        LofConfig {
            k: 20,
            factor_threshold: 1.5,
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("LOF threshold must be positive, got {t}")))
    }
}

/// Local reachability density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Finite(f64),
    Infinite,
}

impl Density {
    fn from_mean_reach(mean: f64) -> Self {
        if mean > 0.0 {
            Density::Finite(1.0 / mean)
        } else {
            Density::Infinite
        }
    }

    /// `self / other`, with ∞/∞ = 1.
    pub fn ratio(self, other: Density) -> f64 {
        match (self, other) {
            (Density::Infinite, Density::Infinite) => 1.0,
            (Density::Infinite, Density::Finite(_)) => f64::INFINITY,
            (Density::Finite(_), Density::Infinite) => 0.0,
            (Density::Finite(a), Density::Finite(b)) => a / b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    pub reference_points: Vec<Vec<f64>>,
    pub k: usize,
    pub k_distances: Vec<f64>,
    pub neighborhoods: Vec<Vec<usize>>,
    pub lrds: Vec<Density>,
    pub scaling: ScalingParams,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-th smallest value of `dists` (1-based k), and the indices within it.
fn k_neighborhood(dists: &[(usize, f64)], k: usize) -> (f64, Vec<usize>) {
    let mut sorted: Vec<f64> = dists.iter().map(|&(_, d)| d).collect();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kdist = *kth;
    let members = dists
        .iter()
        .filter(|&&(_, d)| d <= kdist)
        .map(|&(i, _)| i)
        .collect();
    (kdist, members)
}

pub fn fit_lof(samples: &[Vec<f64>], cfg: &LofConfig) -> Result<LofModel> {
    check_threshold(cfg.factor_threshold)?;
    if cfg.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let n = samples.len();
    if n <= cfg.k {
        return Err(Error::TooFewSamples {
            needed: cfg.k + 1,
            got: n,
        });
    }
    let dim = samples[0].len();
    for s in samples {
        check_dim(dim, s.len())?;
    }

    let (k_distances, neighborhoods): (Vec<f64>, Vec<Vec<usize>>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, euclidean(&samples[i], &samples[j])))
                .collect();
            k_neighborhood(&dists, cfg.k)
        })
        .unzip();

    let lrds = (0..n)
        .into_par_iter()
        .map(|i| {
            let hood = &neighborhoods[i];
            let total: f64 = hood
                .iter()
                .map(|&o| k_distances[o].max(euclidean(&samples[i], &samples[o])))
                .sum();
            Density::from_mean_reach(total / hood.len() as f64)
        })
        .collect();

    Ok(LofModel {
        reference_points: samples.to_vec(),
        k: cfg.k,
        k_distances,
        neighborhoods,
        lrds,
        scaling: ScalingParams::identity(dim),
    })
}

impl LofModel {
    pub fn with_scaling(mut self, scaling: ScalingParams) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    fn mean_ratio(&self, hood: &[usize], own: Density) -> f64 {
        let total: f64 = hood.iter().map(|&o| self.lrds[o].ratio(own)).sum();
        total / hood.len() as f64
    }

    pub fn factor(&self, x: &[f64]) -> Result<f64> {
        let z = self.scaling.apply(x)?;
        Ok(self.factor_scaled(&z))
    }

    pub(crate) fn factor_scaled(&self, z: &[f64]) -> f64 {
        let dists: Vec<(usize, f64)> = self
            .reference_points
            .iter()
            .enumerate()
            .map(|(i, r)| (i, euclidean(z, r)))
            .collect();
        let (_, hood) = k_neighborhood(&dists, self.k);
        let total: f64 = hood
            .iter()
            .map(|&o| self.k_distances[o].max(dists[o].1))
            .sum();
        let own = Density::from_mean_reach(total / hood.len() as f64);
        self.mean_ratio(&hood, own)
    }

    /// Factor of reference `i` within its own model, self excluded.
    pub fn reference_factor(&self, i: usize) -> f64 {
        self.mean_ratio(&self.neighborhoods[i], self.lrds[i])
    }

    pub fn decide(&self, x: &[f64], threshold: f64) -> Result<Verdict> {
        check_threshold(threshold)?;
        Ok(verdict_from_factor(self.factor(x)?, threshold))
    }
}

pub fn verdict_from_factor(factor: f64, threshold: f64) -> Verdict {
    if factor > threshold {
        Verdict::Abnormal
    } else {
        Verdict::Normal
    }
}

pub fn lof_factor(model: &LofModel, x: &[f64]) -> Result<f64> {
    model.factor(x)
}

pub fn lof_decide(model: &LofModel, x: &[f64], threshold: f64) -> Result<Verdict> {
    model.decide(x, threshold)
}
