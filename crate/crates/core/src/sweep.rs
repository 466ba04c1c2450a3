//! Grid over history length N and future length P: each cell rebuilds the
//! windows, refits the ensemble on the training split and scores the rest.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::pipeline::{run_holdout, DetectorConfig, DetectorKind};
use crate::reading::SeriesSegment;
use crate::window::WindowConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_history: usize,
    pub p_future: usize,
    /// Window composition over all segments (train and held-out).
    pub n_abnormal: usize,
    pub n_normal: usize,
    /// Ensemble on the held-out split.
    pub report: EvalReport,
}

/// Sorted, deduplicated grid cells in (N, P) order.
pub fn grid(n_values: &[usize], p_values: &[usize]) -> Result<Vec<WindowConfig>> {
    if n_values.is_empty() || p_values.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let mut ns = n_values.to_vec();
    let mut ps = p_values.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ps.sort_unstable();
    ps.dedup();
    ns.iter()
        .flat_map(|&n| ps.iter().map(move |&p| WindowConfig::new(n, p)))
        .collect()
}

pub fn sweep(
    segments: &[SeriesSegment],
    n_values: &[usize],
    p_values: &[usize],
    cfg: &DetectorConfig,
) -> Result<Vec<SweepRow>> {
    let cells = grid(n_values, p_values)?;
    for cell in &cells {
        if !segments.iter().any(|s| cell.sample_count(s.len()) > 0) {
            return Err(Error::NoWindows(format!(
                "(N={}, P={}) is infeasible for every segment",
                cell.n_history, cell.p_future
            )));
        }
    }
    cells
        .par_iter()
        .map(|&cell| {
            let row_cfg = DetectorConfig {
                seed: derive_seed(cfg.seed, &[cell.n_history as u64, cell.p_future as u64]),
                ..*cfg
            };
            let run = run_holdout(segments, cell, DetectorKind::Ensemble, &row_cfg)?;
            Ok(SweepRow {
                n_history: cell.n_history,
                p_future: cell.p_future,
                n_abnormal: run.composition.n_abnormal,
                n_normal: run.composition.n_normal,
                report: *run.evaluation.primary(),
            })
        })
        .collect()
}

/// Aligned text table: start, end, N, P, abnormal, normal, recall%, precision%, F1.
/// The start/end hour columns are not modeled and print as `-`.
pub fn render_table(rows: &[SweepRow]) -> String {
    let header = [
        "start", "end", "N", "P", "abnormal", "normal", "recall(%)", "precision(%)", "F1",
    ];
    let body: Vec<[String; 9]> = rows
        .iter()
        .map(|r| {
            [
                "-".to_owned(),
                "-".to_owned(),
                r.n_history.to_string(),
                r.p_future.to_string(),
                r.n_abnormal.to_string(),
                r.n_normal.to_string(),
                format!("{:.2}", 100.0 * r.report.recall),
                format!("{:.2}", 100.0 * r.report.precision),
                format!("{:.3}", r.report.f1),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  "));
    };
    line(header.to_vec(), &mut out);
    for row in &body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}
