//! Early anomaly detection for sewer flowmeter series.
//!
//! Readings are cut into windows of `N` history steps (the features) and `P`
//! future steps (the label), then scored by a One-Class SVM, an Isolation
//! Forest and a Local Outlier Factor model. The ensemble flags a window only
//! when all three members agree.

pub mod ensemble;
pub mod error;
pub mod iforest;
pub mod lof;
pub mod metrics;
pub mod ocsvm;
pub mod pipeline;
pub mod reading;
pub mod sweep;
pub mod synth;
pub mod window;

pub use ensemble::{bag_intersection, ensemble_decide, fit_ensemble, EnsembleConfig, EnsembleModel, Verdict};
pub use error::{Error, Result};
pub use iforest::{fit_iforest, iforest_decide, iforest_score, IForestConfig, IForestModel};
pub use lof::{fit_lof, lof_decide, lof_factor, LofConfig, LofModel};
pub use metrics::{evaluate, f1_score, EvalReport};
pub use ocsvm::{fit_ocsvm, ocsvm_decide, ocsvm_g, KernelSpec, OcSvmModel, OcSvmTrainConfig};
pub use pipeline::{DetectorConfig, DetectorKind, ModelDocument, TrainedModel};
pub use reading::{parse_csv, segment_series, Day, Label, SensorReading, SeriesSegment};
pub use sweep::{sweep, SweepRow};
pub use synth::{generate, AnomalyKind, AnomalySpec, GenConfig};
pub use window::{build_windows, scale_features, ScalingParams, WindowConfig, WindowSample};
