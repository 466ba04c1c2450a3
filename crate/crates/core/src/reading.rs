//! Flowmeter records, the corpus CSV format, and gap segmentation.
//!
//! One CSV row is one 5-minute reading:
//!
//! ```text
//! day,hour,instantaneous_flow,liquid_level,flow_rate,label
//! 9/7,11:40,0,0,0,abnormal
//! 9/12,7:05,193.759,0.291,0.537,/
//! ```
//!
//! Days carry no year and are ordered within a single non-leap year.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = [
    "day",
    "hour",
    "instantaneous_flow",
    "liquid_level",
    "flow_rate",
    "label",
];

/// Sampling interval of the flowmeters, in minutes.
pub const STEP_MINUTES: u32 = 5;
pub const MINUTES_PER_DAY: u32 = 24 * 60;

const DAYS_IN_MONTH: [u8; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Calendar day without a year, printed as `month/day`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Day {
    month: u8,
    day: u8,
}

impl Day {
    pub fn new(month: u8, day: u8) -> Option<Self> {
        if !(1..=12).contains(&month) {
            return None;
        }
        if day == 0 || day > DAYS_IN_MONTH[month as usize - 1] {
            return None;
        }
        Some(Day { month, day })
    }

    pub fn month(self) -> u8 {
        self.month
    }

    pub fn day(self) -> u8 {
        self.day
    }

    /// Zero-based day of the (non-leap) year.
    pub fn ordinal(self) -> u32 {
        let before: u32 = DAYS_IN_MONTH[..self.month as usize - 1]
            .iter()
            .map(|&d| u32::from(d))
            .sum();
        before + u32::from(self.day) - 1
    }

    pub fn from_ordinal(ordinal: u32) -> Option<Self> {
        let mut rest = ordinal;
        for (i, &len) in DAYS_IN_MONTH.iter().enumerate() {
            let len = u32::from(len);
            if rest < len {
                return Some(Day {
                    month: i as u8 + 1,
                    day: rest as u8 + 1,
                });
            }
            rest -= len;
        }
        None
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.month, self.day)
    }
}

impl FromStr for Day {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (m, d) = s
            .split_once('/')
            .ok_or_else(|| format!("expected month/day, got `{s}`"))?;
        let month: u8 = m
            .trim()
            .parse()
            .map_err(|_| format!("bad month in `{s}`"))?;
        let day: u8 = d.trim().parse().map_err(|_| format!("bad day in `{s}`"))?;
        Day::new(month, day).ok_or_else(|| format!("no such day `{s}`"))
    }
}

impl TryFrom<String> for Day {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Day> for String {
    fn from(d: Day) -> String {
        d.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[default]
    Unlabeled,
    Abnormal,
}

impl Label {
    pub fn is_abnormal(self) -> bool {
        matches!(self, Label::Abnormal)
    }

    fn token(self) -> &'static str {
        match self {
            Label::Unlabeled => "/",
            Label::Abnormal => "abnormal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub day: Day,
    /// Minutes since midnight, on the 5-minute grid.
    pub time_of_day: u32,
    /// m³/h
    pub instantaneous_flow: f64,
    /// m
    pub liquid_level: f64,
    /// m/s
    pub flow_rate: f64,
    pub label: Label,
}

impl SensorReading {
    /// Minutes since the start of the year; used for ordering and gap detection.
    pub fn timestamp(&self) -> i64 {
        i64::from(self.day.ordinal()) * i64::from(MINUTES_PER_DAY) + i64::from(self.time_of_day)
    }

    pub fn channels(&self) -> [f64; 3] {
        [self.instantaneous_flow, self.liquid_level, self.flow_rate]
    }
}

/// Formats minutes since midnight as `H:MM`.
pub fn format_hour(minutes: u32) -> String {
    format!("{}:{:02}", minutes / 60, minutes % 60)
}

fn parse_hour(s: &str) -> std::result::Result<u32, String> {
    let (h, m) = s
        .split_once(':')
        .ok_or_else(|| format!("expected H:MM, got `{s}`"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad hour in `{s}`"))?;
    let m: u32 = m.parse().map_err(|_| format!("bad minute in `{s}`"))?;
    if h > 23 || m > 59 {
        return Err(format!("time out of range `{s}`"));
    }
    let minutes = h * 60 + m;
    if !minutes.is_multiple_of(STEP_MINUTES) {
        return Err(format!("time not on 5-minute grid: `{s}`"));
    }
    Ok(minutes)
}

fn parse_measurement(s: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::parse(row, column, format!("malformed number `{s}`")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::parse(
            row,
            column,
            format!("measurement must be finite and nonnegative, got `{s}`"),
        ));
    }
    Ok(v)
}

fn parse_label(s: &str, row: usize) -> Result<Label> {
    match s {
        "" | "/" => Ok(Label::Unlabeled),
        "abnormal" => Ok(Label::Abnormal),
        other => Err(Error::parse(
            row,
            "label",
            format!("unknown label token `{other}`"),
        )),
    }
}

/// Parses the corpus CSV. Row order is preserved; no sorting happens here.
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SensorReading>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::parse(
            1,
            "header",
            format!("expected `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != CSV_HEADER.len() {
            return Err(Error::parse(
                row,
                "row",
                format!("expected {} fields, got {}", CSV_HEADER.len(), record.len()),
            ));
        }
        let day: Day = record[0]
            .parse()
            .map_err(|e: String| Error::parse(row, "day", e))?;
        let time_of_day = parse_hour(&record[1]).map_err(|e| Error::parse(row, "hour", e))?;
        out.push(SensorReading {
            day,
            time_of_day,
            instantaneous_flow: parse_measurement(&record[2], row, "instantaneous_flow")?,
            liquid_level: parse_measurement(&record[3], row, "liquid_level")?,
            flow_rate: parse_measurement(&record[4], row, "flow_rate")?,
            label: parse_label(&record[5], row)?,
        });
    }
    Ok(out)
}

pub fn parse_csv_str(text: &str) -> Result<Vec<SensorReading>> {
    parse_csv(text.as_bytes())
}

/// Writes readings in the corpus CSV format. Unlabeled rows are written as `/`.
pub fn write_csv<W: Write>(readings: &[SensorReading], output: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(CSV_HEADER)?;
    for r in readings {
        writer.write_record([
            r.day.to_string(),
            format_hour(r.time_of_day),
            r.instantaneous_flow.to_string(),
            r.liquid_level.to_string(),
            r.flow_rate.to_string(),
            r.label.token().to_owned(),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn to_csv_string(readings: &[SensorReading]) -> String {
    let mut buf = Vec::new();
    write_csv(readings, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// A run of readings spaced exactly one sampling step apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSegment {
    pub source_id: String,
    pub readings: Vec<SensorReading>,
}

impl SeriesSegment {
    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

/// Splits readings wherever the step to the next reading is not exactly 5 minutes.
/// Gaps are never filled in.
pub fn segment_series(readings: &[SensorReading]) -> Vec<SeriesSegment> {
    segment_series_from("series", readings)
}

/// Like [`segment_series`], naming segments `{source}#{index}`.
pub fn segment_series_from(source: &str, readings: &[SensorReading]) -> Vec<SeriesSegment> {
    let step = i64::from(STEP_MINUTES);
    let mut segments: Vec<SeriesSegment> = Vec::new();
    let mut current: Vec<SensorReading> = Vec::new();
    for r in readings {
        if let Some(prev) = current.last() {
            if r.timestamp() - prev.timestamp() != step {
                segments.push(SeriesSegment {
                    source_id: format!("{source}#{}", segments.len()),
                    readings: std::mem::take(&mut current),
                });
            }
        }
        current.push(*r);
    }
    if !current.is_empty() {
        segments.push(SeriesSegment {
            source_id: format!("{source}#{}", segments.len()),
            readings: current,
        });
    }
    segments
}
