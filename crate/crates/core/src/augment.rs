//! Class rebalancing: signal-level transforms of positive windows, then
//! feature-level SMOTE.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mean_std, DurationStats};
use crate::seed::{rng, sub_seed, StageRng};

/// A 14-channel window, one `Vec` per channel.
pub type WindowTensor = Vec<Vec<f64>>;

/// Signal augmentation stops at positives:negatives = 45:55.
pub const SIGNAL_RATIO: (usize, usize) = (45, 55);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub noise_sigma_frac: f64,
    pub fft_phase_max_rad: f64,
    pub fft_amp_frac: f64,
    pub dct_jitter_frac: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            noise_sigma_frac: 0.05,
            fft_phase_max_rad: 0.3,
            fft_amp_frac: 0.1,
            dct_jitter_frac: 0.05,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise_sigma_frac", self.noise_sigma_frac),
            ("fft_amp_frac", self.fft_amp_frac),
            ("dct_jitter_frac", self.dct_jitter_frac),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.fft_phase_max_rad > 0.0 && self.fft_phase_max_rad < PI) {
            return Err(Error::Config(format!(
                "fft_phase_max_rad must lie in (0, pi), got {}",
                self.fft_phase_max_rad
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmotePolicy {
    pub k_neighbors: usize,
}

impl Default for SmotePolicy {
    fn default() -> Self {
        SmotePolicy { k_neighbors: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Noise,
    TimeWarp,
    Fft,
    Dct,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::Noise, Transform::TimeWarp, Transform::Fft, Transform::Dct];
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWindow {
    pub data: WindowTensor,
    /// Index of the source window in the input list.
    pub source: usize,
    pub transform: Transform,
}

/// `(signal_deficit, smote_deficit)` for the two balancing stages.
pub fn plan_balance(pos: usize, neg: usize) -> (usize, usize) {
    let (a, b) = SIGNAL_RATIO;
    let target = (a * neg).div_ceil(b);
    let signal = target.saturating_sub(pos);
    let smote = neg.saturating_sub(pos + signal);
    (signal, smote)
}

struct Transformer {
    policy: AugmentPolicy,
    warp_bounds: (f64, f64),
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    dct2: Arc<dyn TransformType2And3<f64>>,
    dct3: Arc<dyn TransformType2And3<f64>>,
}

impl Transformer {
    fn new(len: usize, policy: &AugmentPolicy, durations: &DurationStats) -> Self {
        let mut fp = FftPlanner::new();
        let mut dp = DctPlanner::new();
        Transformer {
            policy: policy.clone(),
            warp_bounds: durations.warp_bounds(),
            fft: fp.plan_fft_forward(len),
            ifft: fp.plan_fft_inverse(len),
            dct2: dp.plan_dct2(len),
            dct3: dp.plan_dct3(len),
        }
    }

    fn apply(&self, src: &WindowTensor, kind: Transform, rng: &mut StageRng) -> WindowTensor {
        match kind {
            Transform::Noise => src.iter().map(|c| add_noise(c, self.policy.noise_sigma_frac, rng)).collect(),
            Transform::TimeWarp => {
                let f = rng.random_range(self.warp_bounds.0..=self.warp_bounds.1);
                src.iter().map(|c| time_warp(c, f)).collect()
            }
            Transform::Fft => src
                .iter()
                .map(|c| self.fft_jitter(c, rng).into_iter().map(|z| z.re).collect())
                .collect(),
            Transform::Dct => src.iter().map(|c| self.dct_jitter(c, rng)).collect(),
        }
    }

    /// Complex inverse transform of the jittered spectrum; the imaginary
    /// parts are rounding residue.
    fn fft_jitter(&self, x: &[f64], rng: &mut StageRng) -> Vec<Complex<f64>> {
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        let p = self.policy.fft_phase_max_rad;
        let a = self.policy.fft_amp_frac;
        // bins 1..ceil(n/2) get jitter mirrored onto n-k; DC and Nyquist stay real
        for k in 1..n.div_ceil(2) {
            let phase = rng.random_range(-p..=p);
            let scale = 1.0 + rng.random_range(-1.0..=1.0) * a;
            let z = buf[k] * Complex::from_polar(scale, phase);
            buf[k] = z;
            buf[n - k] = z.conj();
        }
        self.ifft.process(&mut buf);
        let inv = 1.0 / n as f64;
        buf.iter_mut().for_each(|z| *z *= inv);
        buf
    }

    fn dct_jitter(&self, x: &[f64], rng: &mut StageRng) -> Vec<f64> {
        let n = x.len();
        let mut buf = x.to_vec();
        self.dct2.process_dct2(&mut buf);
        let j = self.policy.dct_jitter_frac;
        for c in buf.iter_mut() {
            *c *= 1.0 + rng.random_range(-1.0..=1.0) * j;
        }
        self.dct3.process_dct3(&mut buf);
        let scale = 2.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }
}

fn add_noise(x: &[f64], frac: f64, rng: &mut StageRng) -> Vec<f64> {
    let (_, std) = mean_std(x);
    let sigma = frac * std;
    if sigma <= 0.0 {
        return x.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    x.iter().map(|v| v + normal.sample(rng)).collect()
}

/// Stretches `x` about its center by `factor` (> 1 slows the motion down),
/// resampled to the same length with clamped linear interpolation.
pub fn time_warp(x: &[f64], factor: f64) -> Vec<f64> {
    let n = x.len();
    let c = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| {
            let t = (c + (i as f64 - c) / factor).clamp(0.0, n as f64 - 1.0);
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = t - lo as f64;
            x[lo] + frac * (x[hi] - x[lo])
        })
        .collect()
}

/// Draws synthetic windows from a fixed set of positive sources. Output `i`
/// uses its own sub-seed, so any subset can be generated in any order.
pub struct SignalAugmenter<'a> {
    positives: &'a [WindowTensor],
    tf: Transformer,
    seed: u64,
}

impl<'a> SignalAugmenter<'a> {
    pub fn new(
        positives: &'a [WindowTensor],
        durations: &DurationStats,
        policy: &AugmentPolicy,
        seed: u64,
    ) -> Result<Self> {
        policy.validate()?;
        durations.validate()?;
        let first = positives.first().ok_or(Error::EmptyMinority)?;
        let len = first.first().map_or(0, Vec::len);
        if len == 0 {
            return Err(Error::Shape("empty source window".into()));
        }
        if let Some(bad) = positives
            .iter()
            .find(|w| w.len() != first.len() || w.iter().any(|c| c.len() != len))
        {
            return Err(Error::Shape(format!(
                "source windows differ in shape: {} channels vs {}",
                bad.len(),
                first.len()
            )));
        }
        Ok(SignalAugmenter {
            positives,
            tf: Transformer::new(len, policy, durations),
            seed,
        })
    }

    pub fn generate(&self, i: usize) -> SyntheticWindow {
        let mut r = rng(sub_seed(self.seed, i as u64));
        let source = r.random_range(0..self.positives.len());
        let transform = Transform::ALL[r.random_range(0..Transform::ALL.len())];
        SyntheticWindow {
            data: self.tf.apply(&self.positives[source], transform, &mut r),
            source,
            transform,
        }
    }
}

/// Emits `deficit` synthetic windows, each a uniformly chosen source under
/// one uniformly chosen transform.
pub fn augment_signals(
    positives: &[WindowTensor],
    durations: &DurationStats,
    policy: &AugmentPolicy,
    deficit: usize,
    seed: u64,
) -> Result<Vec<SyntheticWindow>> {
    if deficit == 0 {
        return Ok(Vec::new());
    }
    let aug = SignalAugmenter::new(positives, durations, policy, seed)?;
    Ok((0..deficit).into_par_iter().map(|i| aug.generate(i)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteSample {
    pub row: Vec<f64>,
    /// Minority row index of `x`.
    pub source: usize,
    /// Minority row index of the neighbor.
    pub neighbor: usize,
    pub u: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest other rows to `minority[i]`, ties to the lower index.
pub fn nearest_neighbors(minority: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = minority
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, r)| (sq_dist(&minority[i], r), j))
        .collect();
    let k = k.min(d.len());
    if k == 0 {
        return Vec::new();
    }
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, j)| j).collect()
}

/// Interpolates `deficit` rows between minority rows and their nearest
/// minority neighbors.
pub fn smote(minority: &[Vec<f64>], policy: &SmotePolicy, deficit: usize, seed: u64) -> Result<Vec<SmoteSample>> {
    if deficit == 0 {
        return Ok(Vec::new());
    }
    let k = policy.k_neighbors;
    if k == 0 || minority.len() <= k {
        return Err(Error::TooFewSamples { got: minority.len(), k });
    }
    let d = minority[0].len();
    if let Some(r) = minority.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: r.len() });
    }
    Ok((0..deficit)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(sub_seed(seed, i as u64));
            let source = r.random_range(0..minority.len());
            let nn = nearest_neighbors(minority, source, k);
            let neighbor = nn[r.random_range(0..nn.len())];
            let u: f64 = r.random_range(0.0..1.0);
            let x = &minority[source];
            let y = &minority[neighbor];
            SmoteSample {
                row: x.iter().zip(y).map(|(a, b)| a + u * (b - a)).collect(),
                source,
                neighbor,
                u,
            }
        })
        .collect())
}
