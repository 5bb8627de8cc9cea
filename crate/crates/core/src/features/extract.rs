//! Per-window feature extraction in catalog order.
//!
//! Per-channel features read session-level z-normalized samples. Cross-foot
//! features read raw samples so left/right asymmetry survives.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::catalog::{CATALOG_LEN, PER_CHANNEL};
use crate::error::{Error, Result};
use crate::model::{magnitude_of_axes, ChannelId, ChannelKind, ChannelNorm, Foot, SensorGroup, NUM_CHANNELS};

/// Denominators below this make ratio features 0.
pub const RATIO_EPS: f64 = 1e-12;
/// Minimum peak prominence as a fraction of the window's standard deviation.
pub const PEAK_PROMINENCE_FRAC: f64 = 0.5;
pub const HIST_BINS: usize = 16;
pub const MIN_WINDOW: usize = 8;
pub const BANDS_HZ: [(f64, f64); 3] = [(0.0, 2.5), (2.5, 5.0), (5.0, 10.0)];

fn ratio(num: f64, den: f64) -> f64 {
    if den.abs() < RATIO_EPS {
        0.0
    } else {
        num / den
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// First index of the maximum.
pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

fn argmin(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v < x[best] {
            best = i;
        }
    }
    best
}

/// Linear-interpolated percentile of sorted data, `p` in `[0, 1]`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pearson correlation clamped to `[-1, 1]`; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let den = (va * vb).sqrt();
    if va.sqrt() < RATIO_EPS || vb.sqrt() < RATIO_EPS {
        0.0
    } else {
        (cov / den).clamp(-1.0, 1.0)
    }
}

/// For each `i`, the minimum of `x` between `i` and the nearest strictly
/// higher sample on the left (or the start), inclusive of `i`.
fn left_base_mins(x: &[f64]) -> Vec<f64> {
    // stack of (value, min over the span this entry absorbed)
    let mut stack: Vec<(f64, f64)> = Vec::new();
    x.iter()
        .map(|&v| {
            let mut m = v;
            while let Some(&(top, seg_min)) = stack.last() {
                if top > v {
                    break;
                }
                m = m.min(seg_min);
                stack.pop();
            }
            stack.push((v, m));
            m
        })
        .collect()
}

/// Indices of local maxima whose prominence is at least `min_prominence`.
/// Prominence is the peak height above the higher of the two bases, each
/// base being the lowest sample before a strictly higher one is reached.
pub fn find_peaks(x: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let left = left_base_mins(x);
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    let mut right = left_base_mins(&rev);
    right.reverse();
    (1..n - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .filter(|&i| {
            let prominence = x[i] - left[i].max(right[i]);
            prominence >= min_prominence && prominence > 0.0
        })
        .collect()
}

/// Extracts catalog-ordered feature vectors from 14-channel windows of one
/// fixed length.
pub struct FeatureExtractor {
    len: usize,
    sample_rate: f64,
    fft: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("len", &self.len)
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(window_len: usize, sample_rate: f64) -> Result<Self> {
        if window_len < MIN_WINDOW {
            return Err(Error::Shape(format!(
                "window of {window_len} samples is shorter than {MIN_WINDOW}"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(window_len);
        let hann = (0..window_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (window_len - 1) as f64).cos())
            .collect();
        Ok(FeatureExtractor {
            len: window_len,
            sample_rate,
            fft,
            hann,
        })
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    /// `window` holds 14 raw channels in `ChannelId::all()` order; `norm`
    /// supplies the session moments used for per-channel features.
    pub fn extract(&self, window: &[Vec<f64>], norm: &ChannelNorm) -> Result<Vec<f64>> {
        if window.len() != NUM_CHANNELS {
            return Err(Error::Shape(format!(
                "expected {NUM_CHANNELS} channels, got {}",
                window.len()
            )));
        }
        if let Some(c) = window.iter().position(|c| c.len() != self.len) {
            return Err(Error::Shape(format!(
                "channel {c} has {} samples, expected {}",
                window[c].len(),
                self.len
            )));
        }
        if let Some(c) = window.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("window channel {}", ChannelId::from_index(c).name())));
        }

        let normalized: Vec<Vec<f64>> = (0..NUM_CHANNELS).map(|c| norm.apply(c, &window[c])).collect();
        let mut out = Vec::with_capacity(CATALOG_LEN);
        for x in &normalized {
            let mut sorted = x.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            self.temporal(x, &sorted, &mut out);
            statistical(x, &sorted, &mut out);
            self.frequency(x, &mut out);
        }
        debug_assert_eq!(out.len(), PER_CHANNEL * NUM_CHANNELS);
        self.cross_foot(window, &mut out);
        self.transition(&normalized, &mut out);
        debug_assert_eq!(out.len(), CATALOG_LEN);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("extracted features".into()));
        }
        Ok(out)
    }

    fn temporal(&self, x: &[f64], sorted: &[f64], out: &mut Vec<f64>) {
        let n = x.len();
        let fs = self.sample_rate;
        let m = mean(x);
        let min = sorted[0];
        let max = sorted[n - 1];
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let waveform_length: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let avg_abs_dev = x.iter().map(|v| (v - m).abs()).sum::<f64>() / n as f64;
        let ssc = x
            .windows(3)
            .filter(|w| (w[1] - w[0]) * (w[1] - w[2]) > 0.0)
            .count();
        let zc = x.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        let std = variance(x).sqrt();
        let peaks = if std > RATIO_EPS {
            find_peaks(x, PEAK_PROMINENCE_FRAC * std)
        } else {
            Vec::new()
        };
        let mean_peak_interval = if peaks.len() < 2 {
            n as f64 / fs
        } else {
            (peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64 / fs
        };
        out.extend_from_slice(&[
            m,
            percentile(sorted, 0.5),
            min,
            max,
            max - min,
            rms,
            mean_abs,
            waveform_length,
            avg_abs_dev,
            ssc as f64,
            zc as f64,
            peaks.len() as f64,
            mean_peak_interval,
            argmax(x) as f64 / fs,
            argmin(x) as f64 / fs,
            ratio(max, rms),
            ratio(m, max),
            ratio(rms, m),
            x[n - 1] - x[0],
        ]);
    }

    /// One-sided power spectrum (DC excluded) of the mean-removed,
    /// Hann-tapered window.
    pub fn power_spectrum(&self, x: &[f64]) -> Vec<f64> {
        let m = mean(x);
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .zip(&self.hann)
            .map(|(v, w)| Complex::new((v - m) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let n = self.len as f64;
        (1..=self.len / 2).map(|k| buf[k].norm_sqr() / n).collect()
    }

    /// Frequency of spectrum bin `j` as returned by `power_spectrum`.
    pub fn bin_freq(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.sample_rate / self.len as f64
    }

    fn frequency(&self, x: &[f64], out: &mut Vec<f64>) {
        let p = self.power_spectrum(x);
        let total: f64 = p.iter().sum();
        if total <= RATIO_EPS * RATIO_EPS {
            out.extend_from_slice(&[0.0; 12]);
            return;
        }
        let probs: Vec<f64> = p.iter().map(|v| v / total).collect();
        let entropy = -probs
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|q| q * q.log2())
            .sum::<f64>();
        let dom = argmax(&p);
        let freqs: Vec<f64> = (0..p.len()).map(|j| self.bin_freq(j)).collect();
        let centroid: f64 = probs.iter().zip(&freqs).map(|(q, f)| q * f).sum();
        let spread = probs
            .iter()
            .zip(&freqs)
            .map(|(q, f)| q * (f - centroid) * (f - centroid))
            .sum::<f64>()
            .sqrt();
        let band = |lo: f64, hi: f64| -> f64 {
            p.iter()
                .zip(&freqs)
                .filter(|(_, &f)| f >= lo && f < hi)
                .map(|(v, _)| v)
                .sum()
        };
        let mut cum = 0.0;
        let mut edge = freqs[freqs.len() - 1];
        for (v, f) in p.iter().zip(&freqs) {
            cum += v;
            if cum >= 0.95 * total {
                edge = *f;
                break;
            }
        }
        let flatness = if p.iter().any(|&v| v <= 0.0) {
            0.0
        } else {
            let log_mean = p.iter().map(|v| v.ln()).sum::<f64>() / p.len() as f64;
            (log_mean.exp() / (total / p.len() as f64)).clamp(0.0, 1.0)
        };
        out.extend_from_slice(&[
            total,
            entropy.max(0.0),
            freqs[dom],
            p[dom],
            p[dom] / total,
            centroid,
            spread,
            band(BANDS_HZ[0].0, BANDS_HZ[0].1),
            band(BANDS_HZ[1].0, BANDS_HZ[1].1),
            band(BANDS_HZ[2].0, BANDS_HZ[2].1),
            edge,
            flatness,
        ]);
    }

    fn cross_foot(&self, raw: &[Vec<f64>], out: &mut Vec<f64>) {
        let ch = |f: Foot, k: ChannelKind| &raw[ChannelId::new(f, k).index()];
        let mag = |f: Foot, g: SensorGroup| {
            let [x, y, z] = g.axes().map(|k| ch(f, k).as_slice());
            magnitude_of_axes(x, y, z)
        };
        let (l_load, r_load) = (ch(Foot::Left, ChannelKind::Load), ch(Foot::Right, ChannelKind::Load));
        let acc_l = mag(Foot::Left, SensorGroup::Acc);
        let acc_r = mag(Foot::Right, SensorGroup::Acc);
        let product_mean = acc_l.iter().zip(&acc_r).map(|(a, b)| a * b).sum::<f64>() / self.len as f64;
        let load_diff = r_load.iter().zip(l_load).map(|(r, l)| r - l).sum::<f64>() / self.len as f64;
        out.extend_from_slice(&[
            pearson(l_load, r_load),
            pearson(ch(Foot::Left, ChannelKind::AccZ), ch(Foot::Right, ChannelKind::AccZ)),
            pearson(&mag(Foot::Left, SensorGroup::Gyro), &mag(Foot::Right, SensorGroup::Gyro)),
            product_mean,
            load_diff,
        ]);
    }

    fn transition(&self, normalized: &[Vec<f64>], out: &mut Vec<f64>) {
        let q = (self.len / 4).max(1);
        for foot in Foot::BOTH {
            let az = &normalized[ChannelId::new(foot, ChannelKind::AccZ).index()];
            let load = &normalized[ChannelId::new(foot, ChannelKind::Load).index()];
            let change = mean(&az[self.len - q..]) - mean(&az[..q]);
            out.extend_from_slice(&[
                change,
                argmax(az) as f64 / self.sample_rate,
                argmax(load) as f64 / self.sample_rate,
            ]);
        }
    }
}

fn statistical(x: &[f64], sorted: &[f64], out: &mut Vec<f64>) {
    let n = x.len();
    let nf = n as f64;
    let m = mean(x);
    let var = variance(x);
    let std = var.sqrt();
    let (skew, kurt) = if std > RATIO_EPS {
        let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / nf;
        let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / nf;
        (m3 / std.powi(3), m4 / (var * var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let med = percentile(sorted, 0.5);
    let mut dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(|a, b| a.total_cmp(b));
    let mad = percentile(&dev, 0.5);
    let (p10, p25, p75, p90) = (
        percentile(sorted, 0.10),
        percentile(sorted, 0.25),
        percentile(sorted, 0.75),
        percentile(sorted, 0.90),
    );
    let energy: f64 = x.iter().map(|v| v * v).sum();

    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let hist_entropy = if hi - lo < RATIO_EPS {
        0.0
    } else {
        let mut bins = [0usize; HIST_BINS];
        for v in x {
            let b = (((v - lo) / (hi - lo)) * HIST_BINS as f64).floor() as usize;
            bins[b.min(HIST_BINS - 1)] += 1;
        }
        -bins
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                p * p.log2()
            })
            .sum::<f64>()
    };

    let autocorr = if var * nf < RATIO_EPS {
        0.0
    } else {
        x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (var * nf)
    };

    let d1 = diff(x);
    let d2 = diff(&d1);
    let var_d1 = variance(&d1);
    let var_d2 = if d2.is_empty() { 0.0 } else { variance(&d2) };
    let mobility = ratio(var_d1, var).max(0.0).sqrt();
    let mobility_d1 = ratio(var_d2, var_d1).max(0.0).sqrt();
    let complexity = ratio(mobility_d1, mobility);

    let k = n / 10;
    let trimmed = mean(&sorted[k..n - k]);

    out.extend_from_slice(&[
        var,
        skew,
        kurt,
        p10,
        p25,
        p75,
        p90,
        p75 - p25,
        mad,
        ratio(std, m),
        energy,
        hist_entropy,
        autocorr,
        mobility,
        complexity,
        trimmed,
    ]);
}

#[cfg(test)]
mod tests {
    use super::super::catalog::FeatureCatalog;
    use super::*;
    use proptest::prelude::*;

    fn feature(v: &[f64], name: &str) -> f64 {
        v[FeatureCatalog::standard().index_of(name).unwrap()]
    }

    fn window_with(len: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
        (0..NUM_CHANNELS).map(|c| (0..len).map(|i| f(c, i)).collect()).collect()
    }

    #[test]
    fn constant_channel_features() {
        let ex = FeatureExtractor::new(256, 512.0).unwrap();
        let w = window_with(256, |_, _| 3.5);
        let v = ex.extract(&w, &ChannelNorm::identity()).unwrap();
        assert_eq!(v.len(), 669);
        assert_eq!(feature(&v, "L_load_mean"), 3.5);
        assert_eq!(feature(&v, "L_load_variance"), 0.0);
        assert_eq!(feature(&v, "L_load_slope_sign_changes"), 0.0);
        assert_eq!(feature(&v, "L_load_spectral_entropy"), 0.0);
        assert_eq!(feature(&v, "L_load_peak_count"), 0.0);
        assert_eq!(feature(&v, "L_load_mean_peak_interval"), 0.5);
    }

    #[test]
    fn sinusoid_dominant_frequency() {
        let ex = FeatureExtractor::new(1024, 512.0).unwrap();
        let w = window_with(1024, |_, i| (2.0 * PI * 4.0 * i as f64 / 512.0).sin());
        let v = ex.extract(&w, &ChannelNorm::identity()).unwrap();
        let f = feature(&v, "R_gz_dominant_freq");
        assert!((f - 4.0).abs() <= 0.5, "dominant {f}");
        // 4 Hz falls in the 2.5-5 Hz band
        assert!(feature(&v, "R_gz_band_2.5_5hz") > 0.9 * feature(&v, "R_gz_spectral_power"));
    }

    #[test]
    fn identical_feet_cross_features() {
        let ex = FeatureExtractor::new(512, 512.0).unwrap();
        let w = window_with(512, |c, i| (i as f64 * 0.03 + c as f64 % 7.0).sin() + 2.0);
        let v = ex.extract(&w, &ChannelNorm::identity()).unwrap();
        assert!((feature(&v, "xf_load_corr") - 1.0).abs() < 1e-12);
        assert_eq!(feature(&v, "xf_load_diff_mean"), 0.0);
        assert!((feature(&v, "xf_az_corr") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_foot_uses_raw_values() {
        let ex = FeatureExtractor::new(64, 512.0).unwrap();
        let w = window_with(64, |c, i| if c == 7 { 5.0 + (i % 3) as f64 } else { 1.0 + (i % 3) as f64 });
        let mut norm = ChannelNorm::identity();
        norm.moments[0] = (1.0, 10.0);
        norm.moments[7] = (5.0, 10.0);
        let v = ex.extract(&w, &norm).unwrap();
        assert!((feature(&v, "xf_load_diff_mean") - 4.0).abs() < 1e-12);
        // per-channel features see the normalized values
        assert!((feature(&v, "L_load_mean") - feature(&v, "R_load_mean")).abs() < 1e-12);
    }

    #[test]
    fn time_to_peak_shift_equivariant() {
        let ex = FeatureExtractor::new(512, 512.0).unwrap();
        for delay in [0usize, 1, 17, 100] {
            let w = window_with(512, |_, i| if i == 200 + delay { 5.0 } else { (i as f64 * 0.01).sin() * 0.1 });
            let v = ex.extract(&w, &ChannelNorm::identity()).unwrap();
            assert_eq!(feature(&v, "L_az_time_to_peak"), (200 + delay) as f64 / 512.0);
            assert_eq!(feature(&v, "tr_R_load_time_to_peak"), (200 + delay) as f64 / 512.0);
        }
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let ex = FeatureExtractor::new(64, 512.0).unwrap();
        let w = window_with(63, |_, _| 0.0);
        assert!(matches!(ex.extract(&w, &ChannelNorm::identity()), Err(Error::Shape(_))));
        let mut w = window_with(64, |_, _| 0.0);
        w[3][10] = f64::INFINITY;
        assert!(matches!(ex.extract(&w, &ChannelNorm::identity()), Err(Error::NonFinite(_))));
        assert!(matches!(FeatureExtractor::new(4, 512.0), Err(Error::Shape(_))));
    }

    fn scan_peaks(x: &[f64], min_prominence: f64) -> Vec<usize> {
        let n = x.len();
        (1..n.saturating_sub(1))
            .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
            .filter(|&i| {
                let mut lm = x[i];
                for j in (0..i).rev() {
                    if x[j] > x[i] {
                        break;
                    }
                    lm = lm.min(x[j]);
                }
                let mut rm = x[i];
                for &v in &x[i + 1..] {
                    if v > x[i] {
                        break;
                    }
                    rm = rm.min(v);
                }
                let p = x[i] - lm.max(rm);
                p >= min_prominence && p > 0.0
            })
            .collect()
    }

    proptest! {
        #[test]
        fn peaks_match_scanning_oracle(x in prop::collection::vec(-3i32..4, 0..80), p in 0i32..4) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            prop_assert_eq!(find_peaks(&x, p as f64), scan_peaks(&x, p as f64));
        }
    }

    #[test]
    fn peak_prominence_filter() {
        let x = [0.0, 1.0, 0.0, 0.2, 0.1, 3.0, 0.0];
        assert_eq!(find_peaks(&x, 0.5), vec![1, 5]);
        assert_eq!(find_peaks(&x, 0.05), vec![1, 3, 5]);
    }

    #[test]
    fn ratio_guard_and_known_values() {
        let ex = FeatureExtractor::new(8, 512.0).unwrap();
        let w = window_with(8, |_, i| [1.0, -1.0][i % 2]);
        let v = ex.extract(&w, &ChannelNorm::identity()).unwrap();
        assert_eq!(feature(&v, "L_gx_rms_to_mean"), 0.0);
        assert_eq!(feature(&v, "L_gx_zero_crossings"), 7.0);
        assert_eq!(feature(&v, "L_gx_slope_sign_changes"), 6.0);
        assert_eq!(feature(&v, "L_gx_waveform_length"), 14.0);
        assert_eq!(feature(&v, "L_gx_energy"), 8.0);
        assert_eq!(feature(&v, "L_gx_hist_entropy"), 1.0);
        assert_eq!(feature(&v, "L_gx_autocorr_lag1"), -7.0 / 8.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bounded_features(seed in 0u64..10_000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ex = FeatureExtractor::new(128, 512.0).unwrap();
            let w: Vec<Vec<f64>> = (0..NUM_CHANNELS)
                .map(|_| (0..128).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let v = ex.extract(&w, &ChannelNorm::identity()).unwrap();
            let max_entropy = (64f64).log2();
            for ch in ChannelId::all() {
                let n = ch.name();
                let h = feature(&v, &format!("{n}_spectral_entropy"));
                prop_assert!((0.0..=max_entropy + 1e-12).contains(&h));
                let fl = feature(&v, &format!("{n}_spectral_flatness"));
                prop_assert!((0.0..=1.0).contains(&fl));
            }
            for name in ["xf_load_corr", "xf_az_corr", "xf_gyro_mag_corr"] {
                prop_assert!((-1.0..=1.0).contains(&feature(&v, name)));
            }
        }
    }
}
