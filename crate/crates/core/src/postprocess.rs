//! Majority-vote smoothing, segment merging and valley-peak-valley duration
//! measurement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelId, ChannelKind, Foot, SessionRecording};
use crate::windowing::LabeledWindow;

/// Valley search reaches this far beyond the segment edges.
pub const DEFAULT_VALLEY_MARGIN_S: f64 = 0.5;

/// Smooths `labels` with a centered majority over `vote_windows` labels.
/// Near either end the span shrinks symmetrically so it stays centered and
/// odd-sized.
pub fn majority_vote(labels: &[u8], vote_windows: usize) -> Result<Vec<u8>> {
    if vote_windows == 0 || vote_windows % 2 == 0 {
        return Err(Error::Config(format!("vote_windows must be odd, got {vote_windows}")));
    }
    let n = labels.len();
    let h = vote_windows / 2;
    let mut prefix = vec![0usize; n + 1];
    for (i, &l) in labels.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(l == 1);
    }
    Ok((0..n)
        .map(|i| {
            let r = h.min(i).min(n - 1 - i);
            let ones = prefix[i + r + 1] - prefix[i - r];
            u8::from(2 * ones > 2 * r + 1)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub valley1_idx: usize,
    pub peak_idx: usize,
    pub valley2_idx: usize,
    pub duration_s: f64,
    /// Set when no interior valley-peak-valley shape exists and the duration
    /// falls back to the segment span.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SistSegment {
    pub first_ordinal: usize,
    pub last_ordinal: usize,
    pub start_idx: usize,
    /// Exclusive.
    pub end_idx: usize,
    pub measured: Option<Measurement>,
}

impl SistSegment {
    pub fn span_s(&self, sample_rate: f64) -> f64 {
        (self.end_idx - self.start_idx) as f64 / sample_rate
    }
}

/// Maximal runs of positive windows become segments spanning the first
/// window's start to the last window's end.
pub fn merge_segments(smoothed: &[u8], grid: &[LabeledWindow]) -> Result<Vec<SistSegment>> {
    if smoothed.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: smoothed.len(),
        });
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < smoothed.len() {
        if smoothed[i] != 1 {
            i += 1;
            continue;
        }
        let first = i;
        while i + 1 < smoothed.len() && smoothed[i + 1] == 1 {
            i += 1;
        }
        out.push(SistSegment {
            first_ordinal: grid[first].ordinal,
            last_ordinal: grid[i].ordinal,
            start_idx: grid[first].start_idx,
            end_idx: grid[i].end_idx,
            measured: None,
        });
        i += 1;
    }
    Ok(out)
}

/// Mean of the left and right load channels.
pub fn measurement_signal(rec: &SessionRecording) -> Vec<f64> {
    let l = rec.channel(ChannelId::new(Foot::Left, ChannelKind::Load));
    let r = rec.channel(ChannelId::new(Foot::Right, ChannelKind::Load));
    l.iter().zip(r).map(|(a, b)| (a + b) / 2.0).collect()
}

fn first_argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// Strict form: the peak must be separated from both valleys.
pub fn try_measure(signal: &[f64], seg: &SistSegment, sample_rate: f64, margin_s: f64) -> Result<Measurement> {
    let m = measure(signal, seg, sample_rate, margin_s)?;
    if m.degenerate {
        Err(Error::DegenerateSegment { peak_idx: m.peak_idx })
    } else {
        Ok(m)
    }
}

/// Peak is the maximum of `signal` over the segment; valley 1 the minimum
/// between `start - margin` and the peak (ties to the earliest sample),
/// valley 2 the minimum between the peak and `end + margin` (ties to the
/// latest sample).
pub fn measure(signal: &[f64], seg: &SistSegment, sample_rate: f64, margin_s: f64) -> Result<Measurement> {
    let n = signal.len();
    if seg.start_idx >= seg.end_idx || seg.end_idx > n {
        return Err(Error::Shape(format!(
            "segment [{}, {}) outside signal of {n} samples",
            seg.start_idx, seg.end_idx
        )));
    }
    let margin = (margin_s * sample_rate).round() as usize;
    let peak = first_argmax(signal, seg.start_idx, seg.end_idx);
    let lo = seg.start_idx.saturating_sub(margin);
    let hi = (seg.end_idx + margin).min(n);
    let mut v1 = peak;
    for i in (lo..=peak).rev() {
        if signal[i] <= signal[v1] {
            v1 = i;
        }
    }
    let mut v2 = peak;
    for i in peak..hi {
        if signal[i] <= signal[v2] {
            v2 = i;
        }
    }
    if v1 == peak || v2 == peak {
        return Ok(Measurement {
            valley1_idx: v1,
            peak_idx: peak,
            valley2_idx: v2,
            duration_s: seg.span_s(sample_rate),
            degenerate: true,
        });
    }
    Ok(Measurement {
        valley1_idx: v1,
        peak_idx: peak,
        valley2_idx: v2,
        duration_s: (v2 - v1) as f64 / sample_rate,
        degenerate: false,
    })
}

/// Measures every segment of one session in place.
pub fn measure_all(rec: &SessionRecording, segments: &mut [SistSegment], margin_s: f64) -> Result<()> {
    let signal = measurement_signal(rec);
    for s in segments.iter_mut() {
        s.measured = Some(measure(&signal, s, rec.sample_rate, margin_s)?);
    }
    Ok(())
}
