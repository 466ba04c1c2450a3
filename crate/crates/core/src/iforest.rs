//! Isolation Forest: random axis-parallel partition trees. Points that get
//! isolated after few splits have short paths and high scores.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Verdict;
use crate::error::{check_dim, Error, Result};
use crate::window::ScalingParams;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IForestConfig {
    pub n_trees: usize,
    /// ψ; capped at the training-set size.
    pub subsample_size: usize,
    pub seed: u64,
    pub score_threshold: f64,
}

impl Default for IForestConfig {
    fn default() -> Self {
        IForestConfig {
            n_trees: 100,
            subsample_size: 256,
            seed: 0,
            score_threshold: 0.5,
        }
    }
}

impl IForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        if self.subsample_size < 2 {
            return Err(Error::Config("subsample_size must be at least 2".into()));
        }
        check_threshold(self.score_threshold)
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "isolation score threshold must be in (0, 1), got {t}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        dim: usize,
        /// Points with `x[dim] < value` go left.
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        size: usize,
        depth: usize,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            Node::Leaf { .. } => 0,
        }
    }

    pub fn leaf_sizes(&self) -> Vec<usize> {
        match self {
            Node::Split { left, right, .. } => {
                let mut v = left.leaf_sizes();
                v.extend(right.leaf_sizes());
                v
            }
            Node::Leaf { size, .. } => vec![*size],
        }
    }

    /// Path length with the unresolved-subtree adjustment `c(size)` at the leaf.
    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Split {
                    dim,
                    value,
                    left,
                    right,
                } => node = if x[*dim] < *value { left } else { right },
                Node::Leaf { size, depth } => return *depth as f64 + average_path_length(*size),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IForestModel {
    pub trees: Vec<Node>,
    /// Effective ψ, i.e. `min(ψ, n)`.
    pub subsample_size: usize,
    pub scaling: ScalingParams,
}

/// Average path length of an unsuccessful BST search among `m` points.
/// `c(1) = 0`, `c(2) = 1`, otherwise `2·H(m−1) − 2(m−1)/m` with `H(i) ≈ ln i + γ`.
pub fn average_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = m as f64;
            2.0 * ((m - 1.0).ln() + EULER_MASCHERONI) - 2.0 * (m - 1.0) / m
        }
    }
}

pub fn height_limit(psi: usize) -> usize {
    (psi.max(1) as f64).log2().ceil() as usize
}

struct TreeBuilder<'a> {
    samples: &'a [Vec<f64>],
    dim: usize,
    limit: usize,
    rng: ChaCha8Rng,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: &[usize], depth: usize) -> Node {
        let leaf = Node::Leaf {
            size: idx.len(),
            depth,
        };
        if idx.len() <= 1 || depth >= self.limit {
            return leaf;
        }
        let spread: Vec<(usize, f64, f64)> = (0..self.dim)
            .filter_map(|d| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &i| {
                    let v = self.samples[i][d];
                    (acc.0.min(v), acc.1.max(v))
                });
                (hi > lo).then_some((d, lo, hi))
            })
            .collect();
        if spread.is_empty() {
            // all remaining points identical
            return leaf;
        }
        let (d, lo, hi) = spread[self.rng.gen_range(0..spread.len())];
        // value in (lo, hi] keeps both sides nonempty
        let u: f64 = self.rng.gen();
        let mut value = hi - u * (hi - lo);
        if value <= lo {
            value = hi;
        }
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.samples[i][d] < value);
        Node::Split {
            dim: d,
            value,
            left: Box::new(self.grow(&left, depth + 1)),
            right: Box::new(self.grow(&right, depth + 1)),
        }
    }
}

/// Tree `t` draws from ChaCha stream `t` of `seed`, so results do not depend on
/// how trees are scheduled across threads.
pub fn fit_iforest(samples: &[Vec<f64>], cfg: &IForestConfig) -> Result<IForestModel> {
    cfg.validate()?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let dim = samples[0].len();
    for s in samples {
        check_dim(dim, s.len())?;
    }
    let psi = cfg.subsample_size.min(n);
    let limit = height_limit(psi);

    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let idx = index::sample(&mut rng, n, psi).into_vec();
            let mut builder = TreeBuilder {
                samples,
                dim,
                limit,
                rng,
            };
            builder.grow(&idx, 0)
        })
        .collect();

    Ok(IForestModel {
        trees,
        subsample_size: psi,
        scaling: ScalingParams::identity(dim),
    })
}

impl IForestModel {
    pub fn with_scaling(mut self, scaling: ScalingParams) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    /// Mean adjusted path length over the trees, for a model-space vector.
    pub fn expected_path_length(&self, z: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.path_length(z)).sum();
        total / self.trees.len() as f64
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let z = self.scaling.apply(x)?;
        Ok(self.score_scaled(&z))
    }

    pub(crate) fn score_scaled(&self, z: &[f64]) -> f64 {
        score_from_path(self.expected_path_length(z), self.subsample_size)
    }

    pub fn decide(&self, x: &[f64], threshold: f64) -> Result<Verdict> {
        check_threshold(threshold)?;
        Ok(verdict_from_score(self.score(x)?, threshold))
    }
}

/// `s = 2^(−E[h] / c(ψ))`.
pub fn score_from_path(expected_path: f64, psi: usize) -> f64 {
    let c = average_path_length(psi);
    if c > 0.0 {
        2f64.powf(-expected_path / c)
    } else {
        1.0
    }
}

pub fn verdict_from_score(score: f64, threshold: f64) -> Verdict {
    if score > threshold {
        Verdict::Abnormal
    } else {
        Verdict::Normal
    }
}

pub fn iforest_score(model: &IForestModel, x: &[f64]) -> Result<f64> {
    model.score(x)
}

pub fn iforest_decide(model: &IForestModel, x: &[f64], threshold: f64) -> Result<Verdict> {
    model.decide(x, threshold)
}
