//! Time-series types shared by every stage: the 14-channel taxonomy, session
//! recordings with their annotations, and the magnitude / z-normalization
//! primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal device sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 512.0;

/// 2 feet x (load + 3-axis accelerometer + 3-axis gyroscope).
pub const NUM_CHANNELS: usize = 14;

/// Standard deviations at or below this are treated as a constant series.
pub const CONSTANT_STD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub const BOTH: [Foot; 2] = [Foot::Left, Foot::Right];

    pub fn prefix(self) -> &'static str {
        match self {
            Foot::Left => "L",
            Foot::Right => "R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    Load,
    AccX,
    AccY,
    AccZ,
    GyroX,
    GyroY,
    GyroZ,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 7] = [
        ChannelKind::Load,
        ChannelKind::AccX,
        ChannelKind::AccY,
        ChannelKind::AccZ,
        ChannelKind::GyroX,
        ChannelKind::GyroY,
        ChannelKind::GyroZ,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ChannelKind::Load => "load",
            ChannelKind::AccX => "ax",
            ChannelKind::AccY => "ay",
            ChannelKind::AccZ => "az",
            ChannelKind::GyroX => "gx",
            ChannelKind::GyroY => "gy",
            ChannelKind::GyroZ => "gz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId {
    pub foot: Foot,
    pub kind: ChannelKind,
}

impl ChannelId {
    pub const fn new(foot: Foot, kind: ChannelKind) -> Self {
        ChannelId { foot, kind }
    }

    /// All 14 channels in storage order: left foot first, kinds in
    /// `ChannelKind::ALL` order.
    pub fn all() -> [ChannelId; NUM_CHANNELS] {
        let mut out = [ChannelId::new(Foot::Left, ChannelKind::Load); NUM_CHANNELS];
        for (f, foot) in Foot::BOTH.into_iter().enumerate() {
            for (k, kind) in ChannelKind::ALL.into_iter().enumerate() {
                out[f * 7 + k] = ChannelId::new(foot, kind);
            }
        }
        out
    }

    pub fn index(self) -> usize {
        let f = match self.foot {
            Foot::Left => 0,
            Foot::Right => 1,
        };
        let k = ChannelKind::ALL
            .iter()
            .position(|&k| k == self.kind)
            .expect("kind listed in ALL");
        f * 7 + k
    }

    pub fn from_index(idx: usize) -> ChannelId {
        Self::all()[idx]
    }

    /// e.g. `L_load`, `R_gz`.
    pub fn name(self) -> String {
        format!("{}_{}", self.foot.prefix(), self.kind.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorGroup {
    Acc,
    Gyro,
}

impl SensorGroup {
    pub fn axes(self) -> [ChannelKind; 3] {
        match self {
            SensorGroup::Acc => [ChannelKind::AccX, ChannelKind::AccY, ChannelKind::AccZ],
            SensorGroup::Gyro => [ChannelKind::GyroX, ChannelKind::GyroY, ChannelKind::GyroZ],
        }
    }
}

/// One channel's samples. Load is in raw sensor units, acceleration in g,
/// angular rate in deg/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSeries {
    pub id: ChannelId,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl ChannelSeries {
    pub fn new(id: ChannelId, samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate must be > 0, got {sample_rate}")));
        }
        if let Some(row) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value {
                context: "channel series".into(),
                row,
                column: id.name(),
            });
        }
        Ok(ChannelSeries {
            id,
            samples,
            sample_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Interval { start_s, end_s }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Closed-interval membership.
    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }

    pub fn intersection(&self, other: &Interval) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }
}

/// Annotated SiSt (positive) and StSi (hard negative) intervals, in seconds
/// relative to the recording's `t0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub sist: Vec<Interval>,
    pub stsi: Vec<Interval>,
}

impl AnnotationSet {
    /// Sorts both lists and checks that each is well formed and non-overlapping.
    pub fn validated(mut self) -> Result<Self> {
        for (name, list) in [("sist", &mut self.sist), ("stsi", &mut self.stsi)] {
            for iv in list.iter() {
                if !(iv.start_s.is_finite() && iv.end_s.is_finite()) {
                    return Err(Error::Format {
                        context: format!("{name} annotations"),
                        message: "non-finite interval bound".into(),
                    });
                }
                if iv.start_s >= iv.end_s {
                    return Err(Error::Format {
                        context: format!("{name} annotations"),
                        message: format!("interval ({}, {}) has start >= end", iv.start_s, iv.end_s),
                    });
                }
            }
            list.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
            for pair in list.windows(2) {
                if pair[1].start_s < pair[0].end_s {
                    return Err(Error::Overlap(format!(
                        "{name} intervals ({}, {}) and ({}, {}) overlap",
                        pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
                    )));
                }
            }
        }
        Ok(self)
    }

    /// Checks that every interval lies within `[0, duration_s]`.
    pub fn check_within(&self, duration_s: f64) -> Result<()> {
        for iv in self.sist.iter().chain(&self.stsi) {
            if iv.start_s < 0.0 || iv.end_s > duration_s {
                return Err(Error::Format {
                    context: "annotations".into(),
                    message: format!(
                        "interval ({}, {}) outside recording [0, {duration_s}]",
                        iv.start_s, iv.end_s
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn is_sist(&self, t: f64) -> bool {
        self.sist.iter().any(|iv| iv.contains(t))
    }
}

/// Corpus statistics of SiSt durations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean_s: f64,
    pub sd_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for DurationStats {
    /// Durations observed in the older-adult cohort.
    fn default() -> Self {
        DurationStats {
            mean_s: 1.52,
            sd_s: 0.36,
            min_s: 0.39,
            max_s: 2.87,
        }
    }
}

impl DurationStats {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_s > 0.0
            && self.min_s <= self.mean_s
            && self.mean_s <= self.max_s
            && self.sd_s >= 0.0
            && [self.mean_s, self.sd_s, self.min_s, self.max_s]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid duration statistics {self:?}")))
        }
    }

    /// Time-warp factor bounds `[min/mean, max/mean]`.
    pub fn warp_bounds(&self) -> (f64, f64) {
        (self.min_s / self.mean_s, self.max_s / self.mean_s)
    }
}

/// A synchronized 14-channel session. All channels share length and rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecording {
    pub participant_id: String,
    pub session_id: String,
    /// Epoch of sample 0, seconds on the synchronized clock.
    pub t0: f64,
    pub sample_rate: f64,
    channels: Vec<ChannelSeries>,
    pub annotations: AnnotationSet,
}

impl SessionRecording {
    /// `channels` must be given in `ChannelId::all()` order.
    pub fn new(
        participant_id: impl Into<String>,
        session_id: impl Into<String>,
        t0: f64,
        sample_rate: f64,
        channels: Vec<Vec<f64>>,
        annotations: AnnotationSet,
    ) -> Result<Self> {
        if channels.len() != NUM_CHANNELS {
            return Err(Error::Shape(format!(
                "expected {NUM_CHANNELS} channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        let channels = ChannelId::all()
            .into_iter()
            .zip(channels)
            .map(|(id, samples)| ChannelSeries::new(id, samples, sample_rate))
            .collect::<Result<Vec<_>>>()?;
        let annotations = annotations.validated()?;
        let rec = SessionRecording {
            participant_id: participant_id.into(),
            session_id: session_id.into(),
            t0,
            sample_rate,
            channels,
            annotations,
        };
        rec.annotations.check_within(rec.duration_s())?;
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, id: ChannelId) -> &[f64] {
        &self.channels[id.index()].samples
    }

    pub fn channel_at(&self, idx: usize) -> &[f64] {
        &self.channels[idx].samples
    }

    pub fn channels(&self) -> &[ChannelSeries] {
        &self.channels
    }

    /// Time of sample `idx` relative to `t0`.
    pub fn time_of(&self, idx: usize) -> f64 {
        idx as f64 / self.sample_rate
    }

    /// Per-channel population moments over the whole session.
    pub fn channel_norm(&self) -> ChannelNorm {
        ChannelNorm {
            moments: self
                .channels
                .iter()
                .map(|c| mean_std(&c.samples))
                .collect(),
        }
    }

    /// Copies samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Vec<Vec<f64>> {
        self.channels
            .iter()
            .map(|c| c.samples[start..end].to_vec())
            .collect()
    }
}

/// Per-channel `(mean, std)` used to z-normalize windows with session-level
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub moments: Vec<(f64, f64)>,
}

impl ChannelNorm {
    pub fn identity() -> Self {
        ChannelNorm {
            moments: vec![(0.0, 1.0); NUM_CHANNELS],
        }
    }

    pub fn apply(&self, channel: usize, x: &[f64]) -> Vec<f64> {
        let (mean, std) = self.moments[channel];
        if std <= CONSTANT_STD_EPS {
            vec![0.0; x.len()]
        } else {
            x.iter().map(|v| (v - mean) / std).collect()
        }
    }
}

/// Euclidean norm of a three-axis sample.
pub fn magnitude(x: f64, y: f64, z: f64) -> f64 {
    (x * x + y * y + z * z).sqrt()
}

/// Population mean and standard deviation (divide by N). Empty input gives
/// `(0, 0)`.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes to zero mean and unit population standard deviation. A
/// constant series maps to all zeros.
pub fn z_normalize(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::Length {
            min: 2,
            got: series.len(),
        });
    }
    let (mean, std) = mean_std(series);
    if std <= CONSTANT_STD_EPS * mean.abs().max(1.0) {
        return Ok(vec![0.0; series.len()]);
    }
    Ok(series.iter().map(|v| (v - mean) / std).collect())
}

/// Sample-wise magnitude of one foot's accelerometer or gyroscope axes.
pub fn magnitude_series(rec: &SessionRecording, foot: Foot, group: SensorGroup) -> Vec<f64> {
    let [x, y, z] = group.axes().map(|k| rec.channel(ChannelId::new(foot, k)));
    magnitude_of_axes(x, y, z)
}

pub(crate) fn magnitude_of_axes(x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .zip(z)
        .map(|((&a, &b), &c)| magnitude(a, b, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn recording_with_axes(ax: Vec<f64>, ay: Vec<f64>, az: Vec<f64>) -> SessionRecording {
        let n = ax.len();
        let mut channels = vec![vec![0.0; n]; NUM_CHANNELS];
        channels[ChannelId::new(Foot::Left, ChannelKind::AccX).index()] = ax;
        channels[ChannelId::new(Foot::Left, ChannelKind::AccY).index()] = ay;
        channels[ChannelId::new(Foot::Left, ChannelKind::AccZ).index()] = az;
        SessionRecording::new("p", "s", 0.0, 512.0, channels, AnnotationSet::default()).unwrap()
    }

    #[test]
    fn fourteen_distinct_channels() {
        let all = ChannelId::all();
        let mut names: Vec<_> = all.iter().map(|c| c.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 14);
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(ChannelId::from_index(i), *c);
        }
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude(3.0, 4.0, 0.0), 5.0);
        assert_eq!(magnitude(0.0, 0.0, 0.0), 0.0);
        assert!((magnitude(1.0, 1.0, 1.0) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn z_normalize_examples() {
        assert_eq!(z_normalize(&[1.0, 3.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(z_normalize(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(z_normalize(&[1.0]), Err(Error::Length { .. })));
    }

    #[test]
    fn z_normalize_moments_on_random_vector() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..512).map(|_| rng.random_range(-10.0..30.0)).collect();
        let z = z_normalize(&x).unwrap();
        // recompute moments independently
        let n = z.len() as f64;
        let m: f64 = z.iter().sum::<f64>() / n;
        let s = (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!(m.abs() < 1e-9);
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn magnitude_series_examples() {
        let rec = recording_with_axes(vec![3.0], vec![4.0], vec![0.0]);
        assert_eq!(magnitude_series(&rec, Foot::Left, SensorGroup::Acc), vec![5.0]);
        let rec = recording_with_axes(vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
        assert_eq!(magnitude_series(&rec, Foot::Left, SensorGroup::Acc), vec![0.0; 4]);
        assert_eq!(magnitude_series(&rec, Foot::Right, SensorGroup::Gyro), vec![0.0; 4]);
    }

    #[test]
    fn magnitude_series_matches_scalar_op_on_sinusoids() {
        let n = 1000;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / 512.0).collect();
        let ax: Vec<f64> = t.iter().map(|t| (2.0 * std::f64::consts::PI * 1.3 * t).sin()).collect();
        let ay: Vec<f64> = t.iter().map(|t| 0.5 * (2.0 * std::f64::consts::PI * 0.7 * t).cos()).collect();
        let az: Vec<f64> = t.iter().map(|t| 1.0 + 0.1 * (9.0 * t).sin()).collect();
        let rec = recording_with_axes(ax.clone(), ay.clone(), az.clone());
        let mag = magnitude_series(&rec, Foot::Left, SensorGroup::Acc);
        assert_eq!(mag.len(), n);
        for i in 0..n {
            let expected = (ax[i].powi(2) + ay[i].powi(2) + az[i].powi(2)).sqrt();
            assert_eq!(mag[i], expected);
        }
    }

    #[test]
    fn annotations_reject_overlap_and_sort() {
        let a = AnnotationSet {
            sist: vec![Interval::new(5.0, 6.0), Interval::new(5.5, 7.0)],
            stsi: vec![],
        };
        assert!(matches!(a.validated(), Err(Error::Overlap(_))));
        let a = AnnotationSet {
            sist: vec![Interval::new(8.0, 9.0), Interval::new(1.0, 2.0)],
            stsi: vec![],
        }
        .validated()
        .unwrap();
        assert_eq!(a.sist[0].start_s, 1.0);
    }

    #[test]
    fn duration_stats_default_is_consistent() {
        let d = DurationStats::default();
        d.validate().unwrap();
        let (lo, hi) = d.warp_bounds();
        assert!((lo - 0.39 / 1.52).abs() < 1e-15 && (hi - 2.87 / 1.52).abs() < 1e-15);
    }

    #[test]
    fn recording_rejects_non_finite() {
        let mut channels = vec![vec![0.0; 3]; NUM_CHANNELS];
        channels[4][1] = f64::NAN;
        let err = SessionRecording::new("p", "s", 0.0, 512.0, channels, AnnotationSet::default());
        assert!(matches!(err, Err(Error::Value { row: 1, .. })));
    }

    proptest! {
        #[test]
        fn magnitude_invariant_to_permutation_and_sign(x in -1e3..1e3f64, y in -1e3..1e3f64, z in -1e3..1e3f64) {
            let m = magnitude(x, y, z);
            prop_assert!(m >= 0.0);
            for v in [magnitude(y, z, x), magnitude(z, x, y), magnitude(-x, y, -z), magnitude(x, -y, z)] {
                prop_assert!((v - m).abs() <= 1e-12 * m.max(1.0));
            }
        }

        #[test]
        fn z_normalize_affine_invariant(
            x in proptest::collection::vec(-100.0..100.0f64, 2..200),
            a in 0.01..100.0f64,
            b in -1e3..1e3f64,
        ) {
            let (_, std) = mean_std(&x);
            prop_assume!(std > 1e-3);
            let z1 = z_normalize(&x).unwrap();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let z2 = z_normalize(&y).unwrap();
            for (p, q) in z1.iter().zip(&z2) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
