//! Intersection ensemble: a window is abnormal only when every member flags it.
//! Each member trains on its own uniform random subset of the training windows.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iforest::{fit_iforest, verdict_from_score, IForestConfig, IForestModel};
use crate::lof::{fit_lof, verdict_from_factor, LofConfig, LofModel};
use crate::ocsvm::{fit_ocsvm, verdict_from_g, KernelSpec, OcSvmModel, OcSvmTrainConfig};
use crate::window::ScalingParams;

/// Binary decision; `Abnormal` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Abnormal,
}

impl Verdict {
    pub fn is_abnormal(self) -> bool {
        self == Verdict::Abnormal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Normal => "normal",
            Verdict::Abnormal => "abnormal",
        }
    }
}

pub fn bag_intersection(verdicts: &[Verdict]) -> Result<Verdict> {
    if verdicts.is_empty() {
        return Err(Error::Empty("bag_intersection needs at least one verdict"));
    }
    Ok(if verdicts.iter().all(|v| v.is_abnormal()) {
        Verdict::Abnormal
    } else {
        Verdict::Normal
    })
}

/// SplitMix64 finalizer over `master` mixed with `tags`; used to derive
/// independent seeds for members, subsets, and sweep rows.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut z = master;
    for &t in tags {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(t.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub ocsvm: OcSvmTrainConfig,
    /// `None` selects RBF with γ = 1/dimension.
    pub kernel: Option<KernelSpec>,
    /// The tree seed is derived from `seed`; `iforest.seed` is ignored here.
    pub iforest: IForestConfig,
    /// `k` is capped at the member's subset size minus one.
    pub lof: LofConfig,
    pub subset_fraction: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            ocsvm: OcSvmTrainConfig::default(),
            kernel: None,
            iforest: IForestConfig::default(),
            lof: LofConfig::default(),
            subset_fraction: 0.8,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subset_fraction must be in (0, 1], got {}",
                self.subset_fraction
            )));
        }
        self.ocsvm.validate()?;
        self.iforest.validate()?;
        if let Some(k) = self.kernel {
            k.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSeeds {
    pub ocsvm: u64,
    pub iforest: u64,
    pub lof: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub ocsvm: OcSvmModel,
    pub iforest: IForestModel,
    pub iforest_threshold: f64,
    pub lof: LofModel,
    pub lof_threshold: f64,
    pub subset_fraction: f64,
    pub subset_seeds: SubsetSeeds,
    pub scaling: ScalingParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberVerdicts {
    pub ocsvm: Verdict,
    pub iforest: Verdict,
    pub lof: Verdict,
    pub ensemble: Verdict,
}

/// Scores behind a [`MemberVerdicts`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberScores {
    pub ocsvm_g: f64,
    pub iforest_score: f64,
    pub lof_factor: f64,
}

/// Sorted subset indices of size `round(fraction·n)`, at least `min_len`.
pub fn random_subset(n: usize, fraction: f64, min_len: usize, seed: u64) -> Vec<usize> {
    let size = ((fraction * n as f64).round() as usize).clamp(min_len.min(n), n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, n, size).into_vec();
    idx.sort_unstable();
    idx
}

fn pick(samples: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Fits the three members on model-space samples; `scaling` is the transform
/// that produced them and is attached to every member.
pub fn fit_ensemble(
    samples: &[Vec<f64>],
    scaling: &ScalingParams,
    cfg: &EnsembleConfig,
) -> Result<EnsembleModel> {
    cfg.validate()?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let dim = scaling.dim();
    let seeds = SubsetSeeds {
        ocsvm: derive_seed(cfg.seed, &[0]),
        iforest: derive_seed(cfg.seed, &[1]),
        lof: derive_seed(cfg.seed, &[2]),
    };

    let svm_set = pick(samples, &random_subset(n, cfg.subset_fraction, 1, seeds.ocsvm));
    let if_set = pick(samples, &random_subset(n, cfg.subset_fraction, 2, seeds.iforest));
    let lof_set = pick(samples, &random_subset(n, cfg.subset_fraction, 2, seeds.lof));

    let kernel = cfg.kernel.unwrap_or_else(|| KernelSpec::default_for_dim(dim));
    let if_cfg = IForestConfig {
        seed: derive_seed(seeds.iforest, &[0x7EE5]),
        ..cfg.iforest
    };
    let lof_cfg = LofConfig {
        k: cfg.lof.k.min(lof_set.len() - 1),
        ..cfg.lof
    };

    let (svm, (forest, lof)) = rayon::join(
        || fit_ocsvm(&svm_set, &cfg.ocsvm, kernel),
        || {
            rayon::join(
                || fit_iforest(&if_set, &if_cfg),
                || fit_lof(&lof_set, &lof_cfg),
            )
        },
    );

    Ok(EnsembleModel {
        ocsvm: svm?.with_scaling(scaling.clone()),
        iforest: forest?.with_scaling(scaling.clone()),
        iforest_threshold: cfg.iforest.score_threshold,
        lof: lof?.with_scaling(scaling.clone()),
        lof_threshold: cfg.lof.factor_threshold,
        subset_fraction: cfg.subset_fraction,
        subset_seeds: seeds,
        scaling: scaling.clone(),
    })
}

impl EnsembleModel {
    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    pub fn scores(&self, x: &[f64]) -> Result<MemberScores> {
        let z = self.scaling.apply(x)?;
        Ok(MemberScores {
            ocsvm_g: self.ocsvm.g_scaled(&z),
            iforest_score: self.iforest.score_scaled(&z),
            lof_factor: self.lof.factor_scaled(&z),
        })
    }

    pub fn verdicts_from_scores(&self, s: &MemberScores) -> MemberVerdicts {
        let ocsvm = verdict_from_g(s.ocsvm_g);
        let iforest = verdict_from_score(s.iforest_score, self.iforest_threshold);
        let lof = verdict_from_factor(s.lof_factor, self.lof_threshold);
        let ensemble =
            bag_intersection(&[ocsvm, iforest, lof]).expect("three verdicts are never empty");
        MemberVerdicts {
            ocsvm,
            iforest,
            lof,
            ensemble,
        }
    }

    pub fn decide_all(&self, x: &[f64]) -> Result<MemberVerdicts> {
        Ok(self.verdicts_from_scores(&self.scores(x)?))
    }

    pub fn decide(&self, x: &[f64]) -> Result<Verdict> {
        Ok(self.decide_all(x)?.ensemble)
    }
}

pub fn ensemble_decide(model: &EnsembleModel, x: &[f64]) -> Result<Verdict> {
    model.decide(x)
}
