//! End-to-end composition: segments → windows → chronological split →
//! clean reference set → scaling → detector fit → evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{derive_seed, fit_ensemble, EnsembleConfig, EnsembleModel, Verdict};
use crate::error::{check_dim, Error, Result};
use crate::iforest::{fit_iforest, IForestConfig, IForestModel};
use crate::lof::{fit_lof, LofConfig, LofModel};
use crate::metrics::{evaluate, EvalReport};
use crate::ocsvm::{fit_ocsvm, KernelSpec, OcSvmModel};
use crate::reading::SeriesSegment;
use crate::window::{build_windows, ScalingParams, WindowConfig, WindowSample};

pub const FORMAT_VERSION: u32 = 1;

/// Share of each segment's windows, oldest first, used for training.
pub const TRAIN_FRACTION: f64 = 0.7;

/// Hyperparameters for every detector. Single-detector training reads only
/// its own section; `seed` drives all randomness.
pub type DetectorConfig = EnsembleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Ocsvm,
    Iforest,
    Lof,
    Ensemble,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Iforest => "iforest",
            DetectorKind::Lof => "lof",
            DetectorKind::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ocsvm" => Ok(DetectorKind::Ocsvm),
            "iforest" => Ok(DetectorKind::Iforest),
            "lof" => Ok(DetectorKind::Lof),
            "ensemble" => Ok(DetectorKind::Ensemble),
            other => Err(Error::Config(format!("unknown detector `{other}`"))),
        }
    }
}

/// Every window of every segment, in segment order.
pub fn all_windows(segments: &[SeriesSegment], cfg: WindowConfig) -> Vec<WindowSample> {
    segments
        .iter()
        .flat_map(|s| build_windows(s, cfg))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<WindowSample>,
    pub eval: Vec<WindowSample>,
}

/// Per segment: the first 70% of windows train, the rest evaluate.
pub fn chronological_split(segments: &[SeriesSegment], cfg: WindowConfig) -> Split {
    let mut split = Split::default();
    for seg in segments {
        let mut windows = build_windows(seg, cfg);
        let cut = (TRAIN_FRACTION * windows.len() as f64).floor() as usize;
        let eval = windows.split_off(cut);
        split.train.extend(windows);
        split.eval.extend(eval);
    }
    split
}

/// Training windows fit for a one-class reference: labeled normal and with no
/// abnormal reading in the history block either.
pub fn reference_features(train: &[WindowSample]) -> Vec<Vec<f64>> {
    train
        .iter()
        .filter(|w| w.label == Verdict::Normal && !w.history_abnormal)
        .map(|w| w.features.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Ocsvm(OcSvmModel),
    Iforest { model: IForestModel, threshold: f64 },
    Lof { model: LofModel, threshold: f64 },
    Ensemble(Box<EnsembleModel>),
}

/// Per-window decision, with member verdicts when the model is an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    /// The detector's raw score: g for ocsvm, s for iforest, the factor for lof.
    /// Ensembles report no single score.
    pub score: Option<f64>,
    pub members: Option<crate::ensemble::MemberVerdicts>,
}

impl TrainedModel {
    pub fn kind(&self) -> DetectorKind {
        match self {
            TrainedModel::Ocsvm(_) => DetectorKind::Ocsvm,
            TrainedModel::Iforest { .. } => DetectorKind::Iforest,
            TrainedModel::Lof { .. } => DetectorKind::Lof,
            TrainedModel::Ensemble(_) => DetectorKind::Ensemble,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TrainedModel::Ocsvm(m) => m.dim(),
            TrainedModel::Iforest { model, .. } => model.dim(),
            TrainedModel::Lof { model, .. } => model.dim(),
            TrainedModel::Ensemble(m) => m.dim(),
        }
    }

    pub fn decide(&self, x: &[f64]) -> Result<Decision> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            TrainedModel::Ocsvm(m) => {
                let g = m.g(x)?;
                Decision {
                    verdict: crate::ocsvm::verdict_from_g(g),
                    score: Some(g),
                    members: None,
                }
            }
            TrainedModel::Iforest { model, threshold } => {
                let s = model.score(x)?;
                Decision {
                    verdict: crate::iforest::verdict_from_score(s, *threshold),
                    score: Some(s),
                    members: None,
                }
            }
            TrainedModel::Lof { model, threshold } => {
                let f = model.factor(x)?;
                Decision {
                    verdict: crate::lof::verdict_from_factor(f, *threshold),
                    score: Some(f),
                    members: None,
                }
            }
            TrainedModel::Ensemble(m) => {
                let v = m.decide_all(x)?;
                Decision {
                    verdict: v.ensemble,
                    score: None,
                    members: Some(v),
                }
            }
        })
    }
}

/// Fits `kind` on raw reference features; scaling is fitted on the same set.
pub fn train_detector(
    kind: DetectorKind,
    reference: &[Vec<f64>],
    cfg: &DetectorConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if reference.len() < 2 {
        return Err(Error::NoWindows(format!(
            "{} clean normal training windows, need at least 2",
            reference.len()
        )));
    }
    let scaling = ScalingParams::fit(reference)?;
    let scaled: Vec<Vec<f64>> = reference
        .iter()
        .map(|x| scaling.apply(x))
        .collect::<Result<_>>()?;
    let dim = scaling.dim();

    Ok(match kind {
        DetectorKind::Ocsvm => {
            let kernel = cfg.kernel.unwrap_or_else(|| KernelSpec::default_for_dim(dim));
            TrainedModel::Ocsvm(fit_ocsvm(&scaled, &cfg.ocsvm, kernel)?.with_scaling(scaling))
        }
        DetectorKind::Iforest => {
            let if_cfg = IForestConfig {
                seed: derive_seed(cfg.seed, &[1]),
                ..cfg.iforest
            };
            TrainedModel::Iforest {
                model: fit_iforest(&scaled, &if_cfg)?.with_scaling(scaling),
                threshold: cfg.iforest.score_threshold,
            }
        }
        DetectorKind::Lof => {
            let lof_cfg = LofConfig {
                k: cfg.lof.k.min(scaled.len() - 1),
                ..cfg.lof
            };
            TrainedModel::Lof {
                model: fit_lof(&scaled, &lof_cfg)?.with_scaling(scaling),
                threshold: cfg.lof.factor_threshold,
            }
        }
        DetectorKind::Ensemble => TrainedModel::Ensemble(Box::new(fit_ensemble(&scaled, &scaling, cfg)?)),
    })
}

/// Serialized model: window geometry plus the fitted detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub window: WindowConfig,
    pub detector: TrainedModel,
}

impl ModelDocument {
    pub fn new(window: WindowConfig, detector: TrainedModel) -> Self {
        ModelDocument {
            format_version: FORMAT_VERSION,
            window,
            detector,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: probe.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.window.validate()?;
        check_dim(doc.window.feature_dim(), doc.detector.dim())?;
        Ok(doc)
    }
}

/// Reports for one evaluated window set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub kind: DetectorKind,
    pub n_windows: usize,
    /// Keyed by `ocsvm`, `iforest`, `lof`, `ensemble`; single detectors have one entry.
    pub reports: BTreeMap<String, EvalReport>,
    /// Indices of windows flagged abnormal, per detector.
    pub flagged: BTreeMap<String, Vec<usize>>,
    /// For ensembles: whether the ensemble flags exactly the intersection of
    /// the member flags.
    pub ensemble_is_intersection: Option<bool>,
}

impl Evaluation {
    pub fn primary(&self) -> &EvalReport {
        &self.reports[self.kind.as_str()]
    }
}

pub fn decide_windows(model: &TrainedModel, windows: &[WindowSample]) -> Result<Vec<Decision>> {
    windows
        .par_iter()
        .map(|w| model.decide(&w.features))
        .collect()
}

pub fn evaluate_windows(model: &TrainedModel, windows: &[WindowSample]) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(Error::NoWindows("nothing to evaluate".into()));
    }
    let decisions = decide_windows(model, windows)?;
    let labels: Vec<Verdict> = windows.iter().map(|w| w.label).collect();

    let mut columns: Vec<(&str, Vec<Verdict>)> = Vec::new();
    match model.kind() {
        DetectorKind::Ensemble => {
            let members: Vec<_> = decisions
                .iter()
                .map(|d| d.members.expect("ensemble decisions carry members"))
                .collect();
            columns.push(("ocsvm", members.iter().map(|m| m.ocsvm).collect()));
            columns.push(("iforest", members.iter().map(|m| m.iforest).collect()));
            columns.push(("lof", members.iter().map(|m| m.lof).collect()));
            columns.push(("ensemble", members.iter().map(|m| m.ensemble).collect()));
        }
        kind => columns.push((kind.as_str(), decisions.iter().map(|d| d.verdict).collect())),
    }

    let mut reports = BTreeMap::new();
    let mut flagged = BTreeMap::new();
    for (name, preds) in &columns {
        reports.insert((*name).to_owned(), evaluate(preds, &labels)?);
        let idx: Vec<usize> = preds
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_abnormal())
            .map(|(i, _)| i)
            .collect();
        flagged.insert((*name).to_owned(), idx);
    }

    let ensemble_is_intersection = (model.kind() == DetectorKind::Ensemble).then(|| {
        let inter = intersect_sorted(
            &intersect_sorted(&flagged["ocsvm"], &flagged["iforest"]),
            &flagged["lof"],
        );
        inter == flagged["ensemble"]
    });

    Ok(Evaluation {
        kind: model.kind(),
        n_windows: windows.len(),
        reports,
        flagged,
        ensemble_is_intersection,
    })
}

pub fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub n_abnormal: usize,
    pub n_normal: usize,
}

impl Composition {
    pub fn of(windows: &[WindowSample]) -> Self {
        let n_abnormal = windows.iter().filter(|w| w.label.is_abnormal()).count();
        Composition {
            n_abnormal,
            n_normal: windows.len() - n_abnormal,
        }
    }

    pub fn total(&self) -> usize {
        self.n_abnormal + self.n_normal
    }
}

/// Outcome of fitting on the chronological training split and scoring the held-out split.
#[derive(Debug, Clone)]
pub struct HoldoutRun {
    pub model: ModelDocument,
    /// All windows, train and eval together.
    pub composition: Composition,
    pub n_train: usize,
    pub n_reference: usize,
    pub evaluation: Evaluation,
}

pub fn run_holdout(
    segments: &[SeriesSegment],
    window: WindowConfig,
    kind: DetectorKind,
    cfg: &DetectorConfig,
) -> Result<HoldoutRun> {
    window.validate()?;
    let split = chronological_split(segments, window);
    if split.train.is_empty() && split.eval.is_empty() {
        return Err(Error::NoWindows(format!(
            "no segment is long enough for N={}, P={}",
            window.n_history, window.p_future
        )));
    }
    let reference = reference_features(&split.train);
    let detector = train_detector(kind, &reference, cfg)?;
    let evaluation = evaluate_windows(&detector, &split.eval)?;
    let mut composition = Composition::of(&split.train);
    let eval_comp = Composition::of(&split.eval);
    composition.n_abnormal += eval_comp.n_abnormal;
    composition.n_normal += eval_comp.n_normal;
    Ok(HoldoutRun {
        model: ModelDocument::new(window, detector),
        composition,
        n_train: split.train.len(),
        n_reference: reference.len(),
        evaluation,
    })
}
