//! Labeled synthetic flowmeter series: a diurnal baseline with multiplicative
//! noise, plus planted episodes of the three observed anomaly shapes
//! (sudden zero, sudden increase, sudden decrease) and transmission gaps.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reading::{Day, Label, SensorReading, MINUTES_PER_DAY, STEP_MINUTES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Baseline {
    /// m³/h
    pub mean_flow: f64,
    /// m
    pub mean_level: f64,
    /// m/s
    pub mean_rate: f64,
    /// Relative half-swing of the daily cycle, in [0, 1).
    pub daily_amplitude: f64,
    /// Relative half-width of the uniform multiplicative noise, in [0, 0.5].
    pub noise: f64,
    /// Minutes since midnight of the daily maximum.
    pub peak_minute: u32,
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline {
            mean_flow: 150.0,
            mean_level: 0.25,
            mean_rate: 0.45,
            daily_amplitude: 0.3,
            noise: 0.05,
            peak_minute: 8 * 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    SuddenZero,
    SuddenIncrease,
    SuddenDecrease,
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub start_step: usize,
    pub duration: usize,
    /// Channel multiplier; required for increase (> 1) and decrease (0..1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

impl AnomalySpec {
    pub fn end_step(&self) -> usize {
        self.start_step + self.duration
    }

    fn validate(&self, length: usize) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::Config("anomaly duration must be positive".into()));
        }
        if self.end_step() > length {
            return Err(Error::Config(format!(
                "{:?} episode [{}, {}) does not fit in {length} steps",
                self.kind,
                self.start_step,
                self.end_step()
            )));
        }
        match (self.kind, self.magnitude) {
            (AnomalyKind::SuddenIncrease, Some(m)) if m > 1.0 && m.is_finite() => Ok(()),
            (AnomalyKind::SuddenDecrease, Some(m)) if m > 0.0 && m < 1.0 => Ok(()),
            (AnomalyKind::SuddenIncrease, m) => Err(Error::Config(format!(
                "sudden_increase needs magnitude > 1, got {m:?}"
            ))),
            (AnomalyKind::SuddenDecrease, m) => Err(Error::Config(format!(
                "sudden_decrease needs magnitude in (0, 1), got {m:?}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub length: usize,
    pub seed: u64,
    #[serde(default = "default_start_day")]
    pub start_day: Day,
    /// Minutes since midnight of the first step, on the 5-minute grid.
    #[serde(default)]
    pub start_minute: u32,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
}

fn default_start_day() -> Day {
    Day::new(1, 1).expect("valid day")
}

impl GenConfig {
    pub fn new(length: usize, seed: u64) -> Self {
        GenConfig {
            length,
            seed,
            start_day: default_start_day(),
            start_minute: 0,
            baseline: Baseline::default(),
            anomalies: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Config("length must be at least 1".into()));
        }
        let b = &self.baseline;
        for (name, v) in [
            ("mean_flow", b.mean_flow),
            ("mean_level", b.mean_level),
            ("mean_rate", b.mean_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..1.0).contains(&b.daily_amplitude) {
            return Err(Error::Config("daily_amplitude must be in [0, 1)".into()));
        }
        if !(0.0..=0.5).contains(&b.noise) {
            return Err(Error::Config("noise must be in [0, 0.5]".into()));
        }
        if self.start_minute >= MINUTES_PER_DAY || !self.start_minute.is_multiple_of(STEP_MINUTES) {
            return Err(Error::Config(
                "start_minute must be on the 5-minute grid within a day".into(),
            ));
        }
        let last = self.start_day.ordinal() as u64 * u64::from(MINUTES_PER_DAY)
            + u64::from(self.start_minute)
            + (self.length as u64 - 1) * u64::from(STEP_MINUTES);
        if last / u64::from(MINUTES_PER_DAY) >= 365 {
            return Err(Error::Config("series runs past 12/31".into()));
        }

        let mut spans: Vec<&AnomalySpec> = self.anomalies.iter().collect();
        for a in &spans {
            a.validate(self.length)?;
        }
        spans.sort_by_key(|a| a.start_step);
        for pair in spans.windows(2) {
            if pair[1].start_step < pair[0].end_step() {
                return Err(Error::Config(format!(
                    "overlapping episodes at steps {} and {}",
                    pair[0].start_step, pair[1].start_step
                )));
            }
        }
        Ok(())
    }
}

pub fn generate(cfg: &GenConfig) -> Result<Vec<SensorReading>> {
    cfg.validate()?;
    let b = &cfg.baseline;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut episode_at: Vec<Option<&AnomalySpec>> = vec![None; cfg.length];
    for a in &cfg.anomalies {
        for slot in &mut episode_at[a.start_step..a.end_step()] {
            *slot = Some(a);
        }
    }

    let origin = cfg.start_day.ordinal() * MINUTES_PER_DAY + cfg.start_minute;
    let mut out = Vec::with_capacity(cfg.length);
    for (step, episode) in episode_at.iter().enumerate() {
        let minute = origin + step as u32 * STEP_MINUTES;
        let day = Day::from_ordinal(minute / MINUTES_PER_DAY).expect("validated calendar range");
        let time_of_day = minute % MINUTES_PER_DAY;

        let phase = TAU * (f64::from(time_of_day) - f64::from(b.peak_minute))
            / f64::from(MINUTES_PER_DAY);
        let diurnal = 1.0 + b.daily_amplitude * phase.cos();
        // noise is drawn for every step, so gaps never shift the stream
        let mut noisy = |mean: f64| {
            let eps: f64 = if b.noise > 0.0 {
                rng.gen_range(-b.noise..=b.noise)
            } else {
                0.0
            };
            mean * diurnal * (1.0 + eps)
        };
        let mut channels = [noisy(b.mean_flow), noisy(b.mean_level), noisy(b.mean_rate)];

        let label = match episode {
            None => Label::Unlabeled,
            Some(a) => match a.kind {
                AnomalyKind::Gap => continue,
                AnomalyKind::SuddenZero => {
                    channels = [0.0; 3];
                    Label::Abnormal
                }
                AnomalyKind::SuddenIncrease | AnomalyKind::SuddenDecrease => {
                    let m = a.magnitude.expect("validated magnitude");
                    channels.iter_mut().for_each(|c| *c *= m);
                    Label::Abnormal
                }
            },
        };

        out.push(SensorReading {
            day,
            time_of_day,
            instantaneous_flow: channels[0],
            liquid_level: channels[1],
            flow_rate: channels[2],
            label,
        });
    }
    Ok(out)
}
