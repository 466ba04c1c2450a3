//! Dual sliding window: `n_history` past readings become the feature vector,
//! the next `p_future` readings decide the label. Stride is one step.

use serde::{Deserialize, Serialize};

use crate::ensemble::Verdict;
use crate::error::{check_dim, Error, Result};
use crate::reading::{Day, SeriesSegment};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    pub n_history: usize,
    pub p_future: usize,
}

impl WindowConfig {
    pub fn new(n_history: usize, p_future: usize) -> Result<Self> {
        let cfg = WindowConfig {
            n_history,
            p_future,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_history == 0 || self.p_future == 0 {
            return Err(Error::Config(format!(
                "window lengths must be positive (N={}, P={})",
                self.n_history, self.p_future
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        CHANNELS * self.n_history
    }

    /// Number of samples a contiguous segment of `len` readings yields.
    pub fn sample_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.n_history + self.p_future)
    }
}

/// Point A of the window layout: the first future step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub source_id: String,
    pub day: Day,
    pub time_of_day: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// `[flow, level, rate]` per history step, oldest first.
    pub features: Vec<f64>,
    pub label: Verdict,
    pub anchor: Anchor,
    /// Whether any history reading itself carries an abnormal label. Not used for
    /// labeling; the pipeline uses it to keep the one-class reference set clean.
    pub history_abnormal: bool,
}

pub fn build_windows(segment: &SeriesSegment, cfg: WindowConfig) -> Vec<WindowSample> {
    let n = cfg.n_history;
    let p = cfg.p_future;
    let readings = &segment.readings;
    let count = cfg.sample_count(readings.len());

    (0..count)
        .map(|i| {
            let history = &readings[i..i + n];
            let future = &readings[i + n..i + n + p];
            let features = history.iter().flat_map(|r| r.channels()).collect();
            let label = if future.iter().any(|r| r.label.is_abnormal()) {
                Verdict::Abnormal
            } else {
                Verdict::Normal
            };
            let a = &future[0];
            WindowSample {
                features,
                label,
                anchor: Anchor {
                    source_id: segment.source_id.clone(),
                    day: a.day,
                    time_of_day: a.time_of_day,
                },
                history_abnormal: history.iter().any(|r| r.label.is_abnormal()),
            }
        })
        .collect()
}

/// Per-dimension standardization fitted on one sample set and reusable on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub means: Vec<f64>,
    /// Population standard deviations. Zero marks a constant dimension, which
    /// passes through untouched.
    pub stds: Vec<f64>,
}

impl ScalingParams {
    pub fn identity(dim: usize) -> Self {
        ScalingParams {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
        }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("scaling needs samples"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for row in rows {
            check_dim(dim, row.len())?;
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);

        let mut stds = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, m) in stds.iter_mut().zip(&means) {
            *s = (*s / n).sqrt();
            // constant columns accumulate only rounding noise
            if *s <= 1e-12 * m.abs().max(1.0) {
                *s = 0.0;
            }
        }
        Ok(ScalingParams { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { v })
            .collect())
    }
}

/// Standardizes every feature dimension over `samples`.
pub fn scale_features(samples: &[WindowSample]) -> Result<(Vec<WindowSample>, ScalingParams)> {
    if samples.is_empty() {
        return Err(Error::Empty("scale_features needs at least one sample"));
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let params = ScalingParams::fit(&rows)?;
    let scaled = samples
        .iter()
        .map(|s| {
            Ok(WindowSample {
                features: params.apply(&s.features)?,
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scaled, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reading::{parse_csv_str, segment_series, Label, SensorReading};

    fn segment(labels: &[Label]) -> SeriesSegment {
        let readings = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| SensorReading {
                day: Day::new(9, 7).unwrap(),
                time_of_day: 5 * i as u32,
                instantaneous_flow: i as f64,
                liquid_level: 10.0 + i as f64,
                flow_rate: 100.0 + i as f64,
                label,
            })
            .collect();
        SeriesSegment {
            source_id: "s".into(),
            readings,
        }
    }

    #[test]
    fn fifteen_readings_make_six_samples() {
        let seg = segment(&[Label::Unlabeled; 15]);
        let w = build_windows(&seg, WindowConfig::new(5, 5).unwrap());
        assert_eq!(w.len(), 6);
        assert!(w.iter().all(|s| s.features.len() == 15));
        assert!(w.iter().all(|s| s.label == Verdict::Normal));
    }

    #[test]
    fn features_are_oldest_first() {
        let seg = segment(&[Label::Unlabeled; 6]);
        let w = build_windows(&seg, WindowConfig::new(2, 1).unwrap());
        assert_eq!(w[1].features, vec![1.0, 11.0, 101.0, 2.0, 12.0, 102.0]);
        assert_eq!(w[1].anchor.time_of_day, 15);
    }

    #[test]
    fn short_segment_yields_nothing() {
        let seg = segment(&[Label::Unlabeled; 9]);
        assert!(build_windows(&seg, WindowConfig::new(5, 5).unwrap()).is_empty());
    }

    #[test]
    fn sudden_zero_future_block_is_abnormal() {
        let csv = "day,hour,instantaneous_flow,liquid_level,flow_rate,label\n\
            9/7,11:20,1.288,0.18,0.081,/\n\
            9/7,11:25,20.929,0.173,0.115,/\n\
            9/7,11:30,4.326,0.168,0.03,/\n\
            9/7,11:35,43.969,0.164,0.13,/\n\
            9/7,11:40,0,0,0,abnormal\n\
            9/7,11:45,0,0,0,abnormal\n";
        let segs = segment_series(&parse_csv_str(csv).unwrap());
        let w = build_windows(&segs[0], WindowConfig::new(4, 2).unwrap());
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].label, Verdict::Abnormal);
        assert_eq!(w[0].anchor.time_of_day, 11 * 60 + 40);
        assert!(!w[0].history_abnormal);
    }

    #[test]
    fn history_labels_do_not_label() {
        let mut labels = vec![Label::Unlabeled; 4];
        labels[0] = Label::Abnormal;
        let w = build_windows(&segment(&labels), WindowConfig::new(2, 2).unwrap());
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].label, Verdict::Normal);
        assert!(w[0].history_abnormal);
    }

    fn samples_from(rows: &[Vec<f64>]) -> Vec<WindowSample> {
        rows.iter()
            .map(|r| WindowSample {
                features: r.clone(),
                label: Verdict::Normal,
                anchor: Anchor {
                    source_id: "s".into(),
                    day: Day::new(1, 1).unwrap(),
                    time_of_day: 0,
                },
                history_abnormal: false,
            })
            .collect()
    }

    #[test]
    fn scaling_rules() {
        let samples = samples_from(&[vec![0.0, 0.0], vec![0.0, 2.0]]);
        let (scaled, params) = scale_features(&samples).unwrap();
        assert_eq!(scaled[0].features, vec![0.0, -1.0]);
        assert_eq!(scaled[1].features, vec![0.0, 1.0]);
        assert_eq!(params.stds[0], 0.0);

        let reapplied: Vec<_> = samples
            .iter()
            .map(|s| params.apply(&s.features).unwrap())
            .collect();
        let direct: Vec<_> = scaled.iter().map(|s| s.features.clone()).collect();
        assert_eq!(reapplied, direct);
    }

    #[test]
    fn constant_nonzero_column_passes_through() {
        let samples = samples_from(&[vec![0.1], vec![0.1], vec![0.1]]);
        let (scaled, _) = scale_features(&samples).unwrap();
        assert!(scaled.iter().all(|s| s.features == vec![0.1]));
    }

    #[test]
    fn scaling_rejects_empty_and_ragged() {
        assert!(scale_features(&[]).is_err());
        assert!(ScalingParams::fit(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn rejects_zero_lengths() {
        assert!(WindowConfig::new(0, 5).is_err());
        assert!(WindowConfig::new(5, 0).is_err());
    }
}
