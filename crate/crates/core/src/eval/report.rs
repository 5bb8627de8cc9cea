//! Report artifacts: `metrics.json` and the CSV tables derived from it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::cv::{CvReport, RegimeSummary, WITHOUT_LOAD, WITH_LOAD};
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.json";
pub const CLASSIFICATION_FILE: &str = "classification.csv";
pub const DURATION_FILE: &str = "durations.csv";
pub const MATCHES_FILE: &str = "matches.csv";
pub const WINDOW_SIZES_FILE: &str = "window_sizes.csv";

#[derive(Debug, Serialize)]
struct ClassificationRow {
    spec: String,
    primary_s: f64,
    n: usize,
    f1_with_load_mean: f64,
    f1_with_load_sd: Option<f64>,
    f1_without_load_mean: Option<f64>,
    f1_without_load_sd: Option<f64>,
    accuracy_with_load_mean: f64,
    accuracy_without_load_mean: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DurationRow {
    spec: String,
    variant: String,
    regime: &'static str,
    mae_mean_s: Option<f64>,
    mae_sd_s: Option<f64>,
    rmse_mean_s: Option<f64>,
    rmse_sd_s: Option<f64>,
    pooled_mae_s: Option<f64>,
    pooled_rmse_s: Option<f64>,
    segments: Option<usize>,
    missed: usize,
}

#[derive(Debug, Serialize)]
struct MatchRow<'a> {
    spec: &'a str,
    variant: &'a str,
    fold: usize,
    session_id: &'a str,
    participant_id: &'a str,
    segment_id: usize,
    start_s: f64,
    end_s: f64,
    valley1_s: f64,
    peak_s: f64,
    valley2_s: f64,
    measured_s: f64,
    degenerate: bool,
    truth_index: Option<usize>,
    truth_duration_s: Option<f64>,
    overlap: f64,
    iou: f64,
    is_tp: bool,
}

#[derive(Debug, Serialize)]
struct WindowSizeRow {
    primary_s: f64,
    n: usize,
    f1_mean: f64,
    f1_sd: Option<f64>,
    accuracy_mean: f64,
    raw_f1_mean: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format { context: path.display().to_string(), message: e.to_string() }
}

fn regime_row(spec: &str, variant: &str, regime: &'static str, r: &RegimeSummary, missed: usize) -> DurationRow {
    DurationRow {
        spec: spec.to_string(),
        variant: variant.to_string(),
        regime,
        mae_mean_s: r.mae_s.map(|m| m.mean),
        mae_sd_s: r.mae_s.and_then(|m| m.sd),
        rmse_mean_s: r.rmse_s.map(|m| m.mean),
        rmse_sd_s: r.rmse_s.and_then(|m| m.sd),
        pooled_mae_s: r.pooled.map(|p| p.mae_s),
        pooled_rmse_s: r.pooled.map(|p| p.rmse_s),
        segments: r.pooled.map(|p| p.n),
        missed,
    }
}

pub fn render_metrics_json(report: &CvReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::json("metrics report", e))?;
    s.push('\n');
    Ok(s)
}

pub fn read_metrics(path: &Path) -> Result<CvReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path.display().to_string(), e))
}

/// Writes the CSV tables derived from `report` into `dir`.
pub fn write_tables(report: &CvReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut t2 = Vec::new();
    let mut t3 = Vec::new();
    let mut sizes = Vec::new();
    let mut matches = Vec::new();
    for s in &report.specs {
        let with = s.variant(WITH_LOAD).ok_or_else(|| Error::Empty(format!("{WITH_LOAD} results for {}", s.label)))?;
        let without = s.variant(WITHOUT_LOAD);
        t2.push(ClassificationRow {
            spec: s.label.clone(),
            primary_s: s.spec.primary_s,
            n: s.spec.n,
            f1_with_load_mean: with.summary.f1.mean,
            f1_with_load_sd: with.summary.f1.sd,
            f1_without_load_mean: without.map(|v| v.summary.f1.mean),
            f1_without_load_sd: without.and_then(|v| v.summary.f1.sd),
            accuracy_with_load_mean: with.summary.accuracy.mean,
            accuracy_without_load_mean: without.map(|v| v.summary.accuracy.mean),
        });
        sizes.push(WindowSizeRow {
            primary_s: s.spec.primary_s,
            n: s.spec.n,
            f1_mean: with.summary.f1.mean,
            f1_sd: with.summary.f1.sd,
            accuracy_mean: with.summary.accuracy.mean,
            raw_f1_mean: with.summary.raw_f1.mean,
        });
        for v in &s.variants {
            let missed = v.summary.segments.missed;
            t3.push(regime_row(&s.label, &v.variant, "tp_only", &v.summary.duration_tp, missed));
            t3.push(regime_row(&s.label, &v.variant, "all_detections", &v.summary.duration_all, missed));
            for f in &v.folds {
                for m in &f.matches {
                    matches.push(MatchRow {
                        spec: &s.label,
                        variant: &v.variant,
                        fold: f.fold,
                        session_id: &m.session_id,
                        participant_id: &m.participant_id,
                        segment_id: m.segment_id,
                        start_s: m.start_s,
                        end_s: m.end_s,
                        valley1_s: m.valley1_s,
                        peak_s: m.peak_s,
                        valley2_s: m.valley2_s,
                        measured_s: m.measured_s,
                        degenerate: m.degenerate,
                        truth_index: m.truth_index,
                        truth_duration_s: m.truth_duration_s,
                        overlap: m.overlap,
                        iou: m.iou,
                        is_tp: m.is_tp,
                    });
                }
            }
        }
    }
    let paths: Vec<PathBuf> = [CLASSIFICATION_FILE, DURATION_FILE, MATCHES_FILE, WINDOW_SIZES_FILE].iter().map(|f| dir.join(f)).collect();
    write_csv(&paths[0], &t2)?;
    write_csv(&paths[1], &t3)?;
    write_csv(&paths[2], &matches)?;
    write_csv(&paths[3], &sizes)?;
    Ok(paths)
}

/// Writes `metrics.json` plus every table.
pub fn write_report(report: &CvReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = dir.join(METRICS_FILE);
    fs::write(&metrics, render_metrics_json(report)?).map_err(|e| Error::io(&metrics, e))?;
    let mut out = vec![metrics];
    out.extend(write_tables(report, dir)?);
    Ok(out)
}
