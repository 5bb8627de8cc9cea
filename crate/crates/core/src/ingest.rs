//! Raw per-foot CSV ingestion, tap-based clock synchronization and
//! annotation loading.
//!
//! Each foot records on its own clock. A hand tap at the start and end of a
//! session produces a sharp load spike whose video-clock time is known; the
//! head tap fixes the offset and the tail tap fixes a linear drift rate.
//! Both feet are then resampled onto one uniform grid.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationSet, Foot, Interval, SessionRecording, DEFAULT_SAMPLE_RATE, NUM_CHANNELS};

pub const FOOT_CSV_HEADER: [&str; 8] = ["t", "load", "ax", "ay", "az", "gx", "gy", "gz"];

/// Threshold multiplier on the median absolute deviation of first
/// differences for tap detection.
pub const TAP_MAD_FACTOR: f64 = 8.0;
pub const DEFAULT_TAP_WINDOW_S: f64 = 10.0;
/// Allowed deviation of a sample interval from the nominal `1/fs`.
pub const JITTER_TOLERANCE: f64 = 0.10;
/// Minimum common span of the two feet after correction.
pub const MIN_OVERLAP_S: f64 = 1.0;

const SNAP_EPS_S: f64 = 1e-9;

/// One foot's raw rows. `channels` holds the 7 signal columns in CSV order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFootFile {
    pub foot: Foot,
    pub timestamps: Vec<f64>,
    pub channels: [Vec<f64>; 7],
}

impl RawFootFile {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn load(&self) -> &[f64] {
        &self.channels[0]
    }
}

/// Rounds to 9 significant digits, the precision of exported CSV values.
pub fn round_sig9(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn fmt_sig9(v: f64) -> String {
    format!("{}", round_sig9(v))
}

pub fn parse_foot_file(path: &Path, foot: Foot) -> Result<RawFootFile> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_foot_csv(file, foot, &path.display().to_string(), DEFAULT_SAMPLE_RATE)
}

/// Parses a foot CSV (`t,load,ax,ay,az,gx,gy,gz`). Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn parse_foot_csv<R: Read>(reader: R, foot: Foot, context: &str, nominal_rate: f64) -> Result<RawFootFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format {
        context: context.into(),
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != FOOT_CSV_HEADER {
        return Err(Error::Format {
            context: context.into(),
            message: format!("header must be `{}`", FOOT_CSV_HEADER.join(",")),
        });
    }

    let nominal_dt = 1.0 / nominal_rate;
    let mut timestamps: Vec<f64> = Vec::new();
    let mut channels: [Vec<f64>; 7] = Default::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format {
            context: context.into(),
            message: e.to_string(),
        })?;
        if record.len() != FOOT_CSV_HEADER.len() {
            return Err(Error::Format {
                context: context.into(),
                message: format!("row {row} has {} fields, expected 8", record.len()),
            });
        }
        let mut vals = [0.0; 8];
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                context: context.into(),
                message: format!("row {row}: `{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Value {
                    context: context.into(),
                    row,
                    column: FOOT_CSV_HEADER[c].into(),
                });
            }
            vals[c] = v;
        }
        if let Some(&prev) = timestamps.last() {
            let dt = vals[0] - prev;
            if dt <= 0.0 {
                return Err(Error::Monotonicity {
                    context: context.into(),
                    row,
                });
            }
            if (dt - nominal_dt).abs() > JITTER_TOLERANCE * nominal_dt {
                return Err(Error::Format {
                    context: context.into(),
                    message: format!("row {row}: sample interval {dt:.6} s outside ±10% of {nominal_dt:.6} s"),
                });
            }
        }
        timestamps.push(vals[0]);
        for (c, ch) in channels.iter_mut().enumerate() {
            ch.push(vals[c + 1]);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Format {
            context: context.into(),
            message: "no data rows".into(),
        });
    }
    Ok(RawFootFile {
        foot,
        timestamps,
        channels,
    })
}

/// Writes a foot CSV. Timestamps carry 9 decimals, values 9 significant
/// digits.
pub fn write_foot_file(path: &Path, raw: &RawFootFile) -> Result<()> {
    let mut out = String::with_capacity(raw.len() * 96);
    out.push_str(&FOOT_CSV_HEADER.join(","));
    out.push('\n');
    for i in 0..raw.len() {
        out.push_str(&format!("{:.9}", raw.timestamps[i]));
        for ch in &raw.channels {
            out.push(',');
            out.push_str(&fmt_sig9(ch[i]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TapSearch {
    Head,
    Tail,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Index of the tap spike in the first or last `window_s` seconds of `load`.
///
/// The statistic is `|x[i] - x[i-1]|`; its first maximum must exceed
/// `TAP_MAD_FACTOR` times the median absolute deviation of the window's
/// first differences. The window is clamped to the recording.
pub fn detect_tap(load: &[f64], search: TapSearch, window_s: f64, sample_rate: f64) -> Result<usize> {
    let n = load.len();
    if n < 3 {
        return Err(Error::Length { min: 3, got: n });
    }
    let w = ((window_s * sample_rate).round() as usize).clamp(2, n);
    let (lo, hi) = match search {
        TapSearch::Head => (0, w),
        TapSearch::Tail => (n - w, n),
    };
    // diff index i covers load[i] - load[i-1]
    let first = lo.max(1);
    let diffs: Vec<f64> = (first..hi).map(|i| load[i] - load[i - 1]).collect();
    let mut tmp = diffs.clone();
    let med = median(&mut tmp);
    let mut dev: Vec<f64> = diffs.iter().map(|d| (d - med).abs()).collect();
    let mad = median(&mut dev);
    let threshold = TAP_MAD_FACTOR * mad;

    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, d) in diffs.iter().enumerate() {
        if d.abs() > best_val {
            best_val = d.abs();
            best = j;
        }
    }
    if best_val > threshold {
        // The jump at i spans samples i-1 and i; the tap is whichever one
        // stands further from the window's median level.
        let i = first + best;
        let mut level: Vec<f64> = load[lo..hi].to_vec();
        let level = median(&mut level);
        if (load[i - 1] - level).abs() > (load[i] - level).abs() {
            Ok(i - 1)
        } else {
            Ok(i)
        }
    } else {
        Err(Error::NoTap {
            peak: best_val,
            threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncOptions {
    pub tap_window_s: f64,
    pub sample_rate: f64,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            tap_window_s: DEFAULT_TAP_WINDOW_S,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

/// Per-foot values are `[left, right]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Sensor-clock time of the head tap.
    pub tap_time_start_s: [f64; 2],
    /// Sensor-clock time of the tail tap.
    pub tap_time_end_s: [f64; 2],
    pub applied_offset_s: [f64; 2],
    /// Tail-tap mismatch left after offset correction, removed by the
    /// linear drift term.
    pub drift_s: [f64; 2],
    /// Left minus right tail-tap time re-detected on the resampled output.
    pub residual_drift_s: Option<f64>,
}

impl SyncReport {
    pub fn max_abs_drift_s(&self) -> f64 {
        self.drift_s[0].abs().max(self.drift_s[1].abs())
    }
}

struct Correction {
    offset: f64,
    drift_rate: f64,
    tap_start: f64,
    tap_end: f64,
    drift: f64,
}

fn foot_correction(raw: &RawFootFile, video_taps: (f64, f64), opts: &SyncOptions) -> Result<Correction> {
    let head = detect_tap(raw.load(), TapSearch::Head, opts.tap_window_s, opts.sample_rate)?;
    let tail = detect_tap(raw.load(), TapSearch::Tail, opts.tap_window_s, opts.sample_rate)?;
    let tap_start = raw.timestamps[head];
    let tap_end = raw.timestamps[tail];
    if tap_end <= tap_start {
        return Err(Error::Overlap(format!(
            "{:?} foot: tail tap ({tap_end}) not after head tap ({tap_start})",
            raw.foot
        )));
    }
    let offset = video_taps.0 - tap_start;
    let drift = video_taps.1 - (tap_end + offset);
    Ok(Correction {
        offset,
        drift_rate: drift / (tap_end - tap_start),
        tap_start,
        tap_end,
        drift,
    })
}

impl Correction {
    fn apply(&self, t: f64) -> f64 {
        t + self.offset + self.drift_rate * (t - self.tap_start)
    }
}

/// Linear interpolation of `values` sampled at increasing `times` onto
/// increasing `grid`. Grid points must lie within `[times[0], times[last]]`.
fn interpolate(times: &[f64], values: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    for &g in grid {
        while j + 1 < times.len() && times[j + 1] <= g {
            j += 1;
        }
        if (g - times[j]).abs() <= SNAP_EPS_S || j + 1 == times.len() {
            out.push(values[j]);
        } else if (times[j + 1] - g).abs() <= SNAP_EPS_S {
            out.push(values[j + 1]);
        } else {
            let frac = (g - times[j]) / (times[j + 1] - times[j]);
            out.push(values[j] + frac * (values[j + 1] - values[j]));
        }
    }
    out
}

/// Aligns both feet to the video clock and resamples them onto a shared
/// uniform grid anchored at the left foot's corrected first sample. The
/// returned recording has empty ids and annotations.
pub fn synchronize(
    left: &RawFootFile,
    right: &RawFootFile,
    video_tap_times: (f64, f64),
    opts: &SyncOptions,
) -> Result<(SessionRecording, SyncReport)> {
    let corr_l = foot_correction(left, video_tap_times, opts)?;
    let corr_r = foot_correction(right, video_tap_times, opts)?;
    let t_l: Vec<f64> = left.timestamps.iter().map(|&t| corr_l.apply(t)).collect();
    let t_r: Vec<f64> = right.timestamps.iter().map(|&t| corr_r.apply(t)).collect();

    let origin = t_l[0];
    let span_start = t_l[0].max(t_r[0]);
    let span_end = t_l[t_l.len() - 1].min(t_r[t_r.len() - 1]);
    if span_end - span_start < MIN_OVERLAP_S {
        return Err(Error::Overlap(format!(
            "common span {:.3} s is shorter than {MIN_OVERLAP_S} s",
            (span_end - span_start).max(0.0)
        )));
    }
    let fs = opts.sample_rate;
    let k0 = ((span_start - origin) * fs - 1e-6).ceil().max(0.0) as usize;
    let k1 = ((span_end - origin) * fs + 1e-6).floor() as usize;
    let grid: Vec<f64> = (k0..=k1)
        .map(|k| origin + k as f64 / fs)
        .filter(|&g| g >= span_start - SNAP_EPS_S && g <= span_end + SNAP_EPS_S)
        .collect();

    let mut channels = Vec::with_capacity(NUM_CHANNELS);
    for (raw, times) in [(left, &t_l), (right, &t_r)] {
        for ch in &raw.channels {
            channels.push(interpolate(times, ch, &grid));
        }
    }
    let t0 = grid[0];
    let rec = SessionRecording::new("", "", t0, fs, channels, AnnotationSet::default())?;

    let residual = {
        let l = crate::model::ChannelId::new(Foot::Left, crate::model::ChannelKind::Load);
        let r = crate::model::ChannelId::new(Foot::Right, crate::model::ChannelKind::Load);
        match (
            detect_tap(rec.channel(l), TapSearch::Tail, opts.tap_window_s, fs),
            detect_tap(rec.channel(r), TapSearch::Tail, opts.tap_window_s, fs),
        ) {
            (Ok(a), Ok(b)) => Some((a as f64 - b as f64) / fs),
            _ => None,
        }
    };

    let report = SyncReport {
        tap_time_start_s: [corr_l.tap_start, corr_r.tap_start],
        tap_time_end_s: [corr_l.tap_end, corr_r.tap_end],
        applied_offset_s: [corr_l.offset, corr_r.offset],
        drift_s: [corr_l.drift, corr_r.drift],
        residual_drift_s: residual,
    };
    Ok((rec, report))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct AnnotationFile {
    #[serde(default)]
    sist: Vec<[f64; 2]>,
    #[serde(default)]
    stsi: Vec<[f64; 2]>,
}

/// Loads `{"sist": [[start, end], ...], "stsi": [...]}` (seconds on the
/// synchronized clock).
pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn parse_annotations(text: &str, context: &str) -> Result<AnnotationSet> {
    let file: AnnotationFile = serde_json::from_str(text).map_err(|e| Error::Format {
        context: context.into(),
        message: e.to_string(),
    })?;
    let conv = |v: Vec<[f64; 2]>| v.into_iter().map(|[s, e]| Interval::new(s, e)).collect();
    AnnotationSet {
        sist: conv(file.sist),
        stsi: conv(file.stsi),
    }
    .validated()
}

pub fn write_annotations(path: &Path, ann: &AnnotationSet) -> Result<()> {
    let conv = |v: &[Interval]| v.iter().map(|iv| [iv.start_s, iv.end_s]).collect();
    let file = AnnotationFile {
        sist: conv(&ann.sist),
        stsi: conv(&ann.stsi),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json("annotations", e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Session manifest. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub participant_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    pub left_csv: PathBuf,
    pub right_csv: PathBuf,
    pub video_tap_start_s: f64,
    pub video_tap_end_s: f64,
    pub annotations: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl SessionManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Ingests one session directory (or manifest path): parses both feet,
/// synchronizes them and attaches annotations shifted to `t0`.
pub fn load_session(path: &Path, opts: &SyncOptions) -> Result<(SessionRecording, SyncReport)> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let manifest = SessionManifest::read(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let (left, right) = rayon::join(
        || parse_foot_file(&base.join(&manifest.left_csv), Foot::Left),
        || parse_foot_file(&base.join(&manifest.right_csv), Foot::Right),
    );
    let (left, right) = (left?, right?);
    let (mut rec, report) = synchronize(
        &left,
        &right,
        (manifest.video_tap_start_s, manifest.video_tap_end_s),
        opts,
    )?;
    let ann = load_annotations(&base.join(&manifest.annotations))?;
    let shift = |v: Vec<Interval>| {
        v.into_iter()
            .map(|iv| Interval::new(iv.start_s - rec.t0, iv.end_s - rec.t0))
            .collect()
    };
    let ann = AnnotationSet {
        sist: shift(ann.sist),
        stsi: shift(ann.stsi),
    }
    .validated()?;
    ann.check_within(rec.duration_s())?;
    rec.annotations = ann;
    rec.participant_id = manifest.participant_id.clone();
    rec.session_id = manifest.session_id.unwrap_or(manifest.participant_id);
    Ok((rec, report))
}

/// Session directories directly under `dir` that hold a manifest, sorted by
/// name.
pub fn corpus_sessions(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(MANIFEST_FILE).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every session of a corpus directory in sorted order.
pub fn load_corpus(dir: &Path, opts: &SyncOptions) -> Result<Vec<(SessionRecording, SyncReport)>> {
    let paths = corpus_sessions(dir)?;
    if paths.is_empty() {
        return Err(Error::Empty(format!("no session manifests under {}", dir.display())));
    }
    paths.iter().map(|p| load_session(p, opts)).collect()
}

/// Writes a synchronized session as one CSV: `t` (synchronized clock) and the
/// 14 channels.
pub fn write_session(path: &Path, rec: &SessionRecording) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let names: Vec<String> = crate::model::ChannelId::all().iter().map(|c| c.name()).collect();
    let io = |e| Error::io(path, e);
    writeln!(w, "t,{}", names.join(",")).map_err(io)?;
    for i in 0..rec.len() {
        write!(w, "{:.9}", rec.t0 + rec.time_of(i)).map_err(io)?;
        for c in 0..NUM_CHANNELS {
            write!(w, ",{}", fmt_sig9(rec.channel_at(c)[i])).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn csv_text(rows: &[[&str; 8]]) -> String {
        let mut s = FOOT_CSV_HEADER.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    #[test]
    fn parses_well_formed_rows() {
        let text = csv_text(&[
            ["0.0", "1", "0", "0", "1", "0", "0", "0"],
            ["0.001953125", "1.1", "0", "0", "1", "0", "0", "0"],
            ["0.00390625", "1.2", "0", "0", "1", "0", "0", "0.5"],
        ]);
        let raw = parse_foot_csv(text.as_bytes(), Foot::Left, "t", 512.0).unwrap();
        assert_eq!(raw.len(), 3);
        assert_eq!(raw.load(), &[1.0, 1.1, 1.2]);
        assert_eq!(raw.channels[6][2], 0.5);
    }

    #[test]
    fn rejects_nan_value() {
        let text = csv_text(&[
            ["0.0", "1", "0", "0", "1", "0", "0", "0"],
            ["0.001953125", "nan", "0", "0", "1", "0", "0", "0"],
        ]);
        let err = parse_foot_csv(text.as_bytes(), Foot::Left, "t", 512.0).unwrap_err();
        assert!(matches!(err, Error::Value { row: 2, ref column, .. } if column == "load"));
    }

    #[test]
    fn rejects_backward_timestamp_naming_row() {
        let text = csv_text(&[
            ["0.0", "1", "0", "0", "1", "0", "0", "0"],
            ["0.001953125", "1", "0", "0", "1", "0", "0", "0"],
            ["0.001", "1", "0", "0", "1", "0", "0", "0"],
        ]);
        let err = parse_foot_csv(text.as_bytes(), Foot::Left, "t", 512.0).unwrap_err();
        assert!(matches!(err, Error::Monotonicity { row: 3, .. }));
    }

    #[test]
    fn rejects_bad_header_and_arity() {
        let text = "time,load,ax,ay,az,gx,gy,gz\n0,1,0,0,1,0,0,0\n";
        assert!(matches!(
            parse_foot_csv(text.as_bytes(), Foot::Left, "t", 512.0),
            Err(Error::Format { .. })
        ));
        let text = format!("{}\n0,1,0,0,1,0,0\n", FOOT_CSV_HEADER.join(","));
        assert!(matches!(
            parse_foot_csv(text.as_bytes(), Foot::Left, "t", 512.0),
            Err(Error::Format { .. })
        ));
    }

    fn noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn mad_of_diffs(x: &[f64]) -> f64 {
        let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut t = d.clone();
        let m = median(&mut t);
        let mut dev: Vec<f64> = d.iter().map(|v| (v - m).abs()).collect();
        median(&mut dev)
    }

    #[test]
    fn tap_single_spike() {
        let mut x = noise(5120, 0.01, 1);
        let mad = mad_of_diffs(&x);
        x[300] += 20.0 * mad;
        assert_eq!(detect_tap(&x, TapSearch::Head, 10.0, 512.0).unwrap(), 300);
    }

    #[test]
    fn tap_largest_of_two_spikes() {
        let mut x = vec![0.0; 2000];
        x[150] = 1.0;
        x[400] = 2.0;
        assert_eq!(detect_tap(&x, TapSearch::Head, 10.0, 512.0).unwrap(), 400);
    }

    #[test]
    fn tap_tail_search_finds_last_spike() {
        let mut x = noise(20 * 512, 0.01, 2);
        x[100] += 1.0;
        x[20 * 512 - 700] += 1.0;
        assert_eq!(detect_tap(&x, TapSearch::Tail, 10.0, 512.0).unwrap(), 20 * 512 - 700);
    }

    #[test]
    fn pure_noise_has_no_tap() {
        // For Gaussian noise the max |diff| over 5120 draws sits near 3.9
        // sigma_d, while 8 * MAD is about 5.4 sigma_d.
        for seed in 0..20 {
            let x = noise(5120, 1.0, 100 + seed);
            let d: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            let max = d.iter().cloned().fold(0.0, f64::max);
            assert!(max < 8.0 * mad_of_diffs(&x));
            assert!(matches!(
                detect_tap(&x, TapSearch::Head, 10.0, 512.0),
                Err(Error::NoTap { .. })
            ));
        }
    }

    fn raw_from_load(foot: Foot, times: Vec<f64>, load: Vec<f64>) -> RawFootFile {
        let n = load.len();
        let az: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
        RawFootFile {
            foot,
            timestamps: times,
            channels: [load, vec![0.0; n], vec![0.0; n], az, vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    fn tapped_load(n: usize, head: usize, tail: usize) -> Vec<f64> {
        let mut load: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64 / 97.0).sin()).collect();
        load[head] += 2.0;
        load[tail] += 2.0;
        load
    }

    #[test]
    fn identity_sync_preserves_samples() {
        let n = 30 * 512;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / 512.0).collect();
        let load = tapped_load(n, 1000, n - 1000);
        let left = raw_from_load(Foot::Left, times.clone(), load.clone());
        let right = raw_from_load(Foot::Right, times.clone(), load.clone());
        let taps = (times[1000], times[n - 1000]);
        let (rec, rep) = synchronize(&left, &right, taps, &SyncOptions::default()).unwrap();
        assert_eq!(rec.len(), n);
        assert_eq!(rep.applied_offset_s, [0.0, 0.0]);
        for c in 0..NUM_CHANNELS {
            let src = if c < 7 { &left.channels[c] } else { &right.channels[c - 7] };
            for (a, b) in rec.channel_at(c).iter().zip(src) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
        assert_eq!(rep.residual_drift_s, Some(0.0));
    }

    #[test]
    fn shifted_right_foot_is_realigned() {
        let n = 40 * 512;
        let true_times: Vec<f64> = (0..n).map(|i| i as f64 / 512.0).collect();
        let load = tapped_load(n, 1500, n - 1500);
        let left = raw_from_load(Foot::Left, true_times.clone(), load.clone());
        // right sensor clock runs 0.5 s ahead
        let right = raw_from_load(Foot::Right, true_times.iter().map(|t| t + 0.5).collect(), load.clone());
        let taps = (true_times[1500], true_times[n - 1500]);
        let (rec, rep) = synchronize(&left, &right, taps, &SyncOptions::default()).unwrap();
        assert!((rep.applied_offset_s[1] + 0.5).abs() < 1e-9);
        // cross-correlation lag of the two load channels is zero
        let l = rec.channel_at(0);
        let r = rec.channel_at(7);
        let lag = best_lag(l, r, 20);
        assert_eq!(lag, 0);
    }

    fn best_lag(a: &[f64], b: &[f64], max_lag: i64) -> i64 {
        let n = a.len() as i64;
        let mut best = (f64::NEG_INFINITY, 0);
        for lag in -max_lag..=max_lag {
            let mut s = 0.0;
            for i in max_lag..n - max_lag {
                s += a[i as usize] * b[(i + lag) as usize];
            }
            if s > best.0 {
                best = (s, lag);
            }
        }
        best.1
    }

    #[test]
    fn too_short_overlap_errors() {
        let n = 410;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / 512.0).collect();
        let load = tapped_load(n, 50, 380);
        let left = raw_from_load(Foot::Left, times.clone(), load.clone());
        let right = raw_from_load(Foot::Right, times.clone(), load);
        let opts = SyncOptions {
            tap_window_s: 0.3,
            ..SyncOptions::default()
        };
        let err = synchronize(&left, &right, (times[50], times[380]), &opts);
        assert!(matches!(err, Err(Error::Overlap(_))));
    }

    #[test]
    fn annotation_file_examples() {
        let a = parse_annotations(r#"{"sist": [[10.0, 11.5]]}"#, "t").unwrap();
        assert_eq!(a.sist, vec![Interval::new(10.0, 11.5)]);
        assert!(a.stsi.is_empty());
        let err = parse_annotations(r#"{"sist": [[5, 6], [5.5, 7]]}"#, "t");
        assert!(matches!(err, Err(Error::Overlap(_))));
        let a = parse_annotations(r#"{"sist": [], "stsi": []}"#, "t").unwrap();
        assert_eq!(a, AnnotationSet::default());
        assert!(matches!(parse_annotations("[1,2]", "t"), Err(Error::Format { .. })));
    }

    #[test]
    fn round_sig9_is_idempotent() {
        for v in [1.0 / 3.0, 123456.789123, -0.000123456789123, 0.0] {
            let r = round_sig9(v);
            assert_eq!(round_sig9(r), r);
            assert!((r - v).abs() <= 1e-8 * v.abs());
        }
    }
}
