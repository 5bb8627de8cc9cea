//! Sliding-window grids and binary midpoint labels.
//!
//! A primary window of `primary_s` seconds is the stride; an extended window
//! concatenates an odd number `n` of primary windows. A window is labeled
//! SiSt (1) iff its midpoint lies inside an annotated SiSt interval, with
//! both interval ends inclusive.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SessionRecording;

/// Primary window lengths in seconds.
pub const PRIMARY_SIZES_S: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub primary_s: f64,
    pub n: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { primary_s: 0.4, n: 5 }
    }
}

impl WindowSpec {
    pub fn new(primary_s: f64, n: usize) -> Result<Self> {
        let spec = WindowSpec { primary_s, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !PRIMARY_SIZES_S.iter().any(|p| (p - self.primary_s).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "primary window {} s is not one of {PRIMARY_SIZES_S:?}",
                self.primary_s
            )));
        }
        if self.n == 0 || self.n % 2 == 0 {
            return Err(Error::Config(format!("n must be odd and positive, got {}", self.n)));
        }
        Ok(())
    }

    /// Primary window (= stride) in samples.
    pub fn primary_samples(&self, sample_rate: f64) -> usize {
        (self.primary_s * sample_rate).round() as usize
    }

    /// Extended window in samples, computed as primary samples x n.
    pub fn window_samples(&self, sample_rate: f64) -> usize {
        self.primary_samples(sample_rate) * self.n
    }

    pub fn extended_s(&self) -> f64 {
        self.primary_s * self.n as f64
    }

    pub fn label(&self) -> String {
        format!("{:.1}s*{}", self.primary_s, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub session_ref: usize,
    pub ordinal: usize,
    pub start_idx: usize,
    /// Exclusive.
    pub end_idx: usize,
    /// Seconds from the recording's `t0`.
    pub midpoint_s: f64,
    pub label: u8,
}

/// Number of windows of `window` samples at `stride` over `n_samples`.
pub fn window_count(n_samples: usize, window: usize, stride: usize) -> usize {
    if n_samples < window {
        0
    } else {
        (n_samples - window) / stride + 1
    }
}

/// Tiles the recording with extended windows at primary-window stride,
/// dropping a tail remainder shorter than one window.
pub fn build_grid(rec: &SessionRecording, spec: &WindowSpec) -> Result<Vec<LabeledWindow>> {
    spec.validate()?;
    let fs = rec.sample_rate;
    let w = spec.window_samples(fs);
    let stride = spec.primary_samples(fs);
    if rec.len() < w {
        return Err(Error::TooShort {
            samples: rec.len(),
            window: w,
        });
    }
    let count = window_count(rec.len(), w, stride);
    Ok((0..count)
        .map(|ordinal| {
            let start_idx = ordinal * stride;
            let midpoint_s = (start_idx as f64 + w as f64 / 2.0) / fs;
            LabeledWindow {
                session_ref: 0,
                ordinal,
                start_idx,
                end_idx: start_idx + w,
                midpoint_s,
                label: u8::from(rec.annotations.is_sist(midpoint_s)),
            }
        })
        .collect())
}

/// `(positives, negatives)`.
pub fn class_ratio(windows: &[LabeledWindow]) -> Result<(usize, usize)> {
    if windows.is_empty() {
        return Err(Error::Empty("window list".into()));
    }
    let pos = windows.iter().filter(|w| w.label == 1).count();
    Ok((pos, windows.len() - pos))
}

/// Debug dump: `ordinal,start_idx,end_idx,midpoint_s,label`.
pub fn write_grid_csv(path: &Path, windows: &[LabeledWindow]) -> Result<()> {
    let mut out = String::from("ordinal,start_idx,end_idx,midpoint_s,label\n");
    for w in windows {
        out.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            w.ordinal, w.start_idx, w.end_idx, w.midpoint_s, w.label
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
