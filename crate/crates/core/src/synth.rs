//! Annotated synthetic sessions used as the verification oracle.
//!
//! Each session starts standing with a head tap, passes through quiet
//! standing, balance sway and a walking bout, sits down, then alternates
//! SiSt and StSi transitions and ends standing with a tail tap. A SiSt load
//! event dips from the sitting level into a valley, rises to a peak and
//! falls into a second valley before settling at the standing level; StSi
//! is its exact time reversal. Annotations run valley to valley.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_annotations, write_foot_file, RawFootFile, SessionManifest, MANIFEST_FILE};
use crate::model::{
    AnnotationSet, ChannelId, ChannelKind, DurationStats, Foot, Interval, SessionRecording, DEFAULT_SAMPLE_RATE,
    NUM_CHANNELS,
};
use crate::seed::{derive_seed, rng, sub_seed, StageRng};

/// Walking cadence in Hz.
pub const WALK_FREQ_HZ: f64 = 1.8;
/// Noise scale per channel kind, multiplied by `noise_level`.
pub const LOAD_NOISE_SCALE: f64 = 0.5;
pub const ACC_NOISE_SCALE: f64 = 1.0;
pub const GYRO_NOISE_SCALE: f64 = 100.0;
/// Height of the tap spike added to both load channels.
pub const TAP_HEIGHT: f64 = 1.5;
/// Peak position as a fraction of the SiSt duration.
pub const PEAK_FRACTION: f64 = 0.4;
/// Width of the cosine flank joining a baseline to its valley.
pub const FLANK_S: f64 = 0.3;
pub const TRUTH_FILE: &str = "truth_events.json";

const HEAD_TAP_S: (f64, f64) = (1.0, 1.5);
const QUIET_END_S: f64 = 10.0;
const SWAY_END_S: f64 = 18.0;
const WALK_S: (f64, f64) = (8.0, 11.0);
const PAUSE_S: (f64, f64) = (2.5, 4.0);
const TAIL_QUIET_S: f64 = 12.0;
const TAIL_TAP_BEFORE_END_S: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_participants: usize,
    pub session_length_s: f64,
    pub sist_count: usize,
    pub durations: DurationStats,
    pub noise_level: f64,
    /// Range of the per-foot gain mismatch applied during walking.
    pub asymmetry_range: (f64, f64),
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_participants: 16,
            session_length_s: 120.0,
            sist_count: 5,
            durations: DurationStats::default(),
            noise_level: 0.02,
            asymmetry_range: (0.8, 1.2),
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed: 2024,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.durations.validate()?;
        if self.n_participants == 0 {
            return Err(Error::Config("n_participants must be at least 1".into()));
        }
        if self.sist_count == 0 {
            return Err(Error::Config("sist_count must be at least 1".into()));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::Config(format!("noise_level must be finite and >= 0, got {}", self.noise_level)));
        }
        let (lo, hi) = self.asymmetry_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid asymmetry range ({lo}, {hi})")));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!("invalid sample rate {}", self.sample_rate)));
        }
        // worst case: every transition at max duration and every pause at max length
        let cycle = 2.0 * self.durations.max_s + 2.0 * PAUSE_S.1;
        let needed = SWAY_END_S + WALK_S.1 + PAUSE_S.1 + self.sist_count as f64 * cycle + TAIL_QUIET_S;
        if self.session_length_s < needed {
            return Err(Error::Config(format!(
                "session_length_s {} cannot hold {} transitions (needs {needed:.1} s)",
                self.session_length_s, self.sist_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Sist,
    Stsi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub kind: EventKind,
    pub start_s: f64,
    pub end_s: f64,
    pub duration_s: f64,
    pub peak_time_s: f64,
    pub valley_times_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLog {
    pub participant_id: String,
    pub session_id: String,
    pub events: Vec<SimEvent>,
    pub tap_times_s: [f64; 2],
    pub walking_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSession {
    pub recording: SessionRecording,
    pub truth: TruthLog,
}

/// Per-participant constants.
struct Subject {
    load_scale: f64,
    sit_level: f64,
    stand_level: f64,
    foot_gain: [f64; 2],
    walk_gain: [f64; 2],
    tilt: [[f64; 2]; 2],
}

impl Subject {
    fn draw(cfg: &SimConfig, r: &mut StageRng) -> Subject {
        let (lo, hi) = cfg.asymmetry_range;
        let load_scale = r.random_range(0.85..1.15);
        Subject {
            load_scale,
            sit_level: 1.0 * load_scale,
            stand_level: 1.6 * load_scale,
            foot_gain: [r.random_range(0.98..1.02), r.random_range(0.98..1.02)],
            walk_gain: [r.random_range(lo..=hi), r.random_range(lo..=hi)],
            tilt: [
                [r.random_range(-0.2..0.2), r.random_range(-0.2..0.2)],
                [r.random_range(-0.2..0.2), r.random_range(-0.2..0.2)],
            ],
        }
    }
}

/// Raised-cosine blend from 0 to 1 over `u` in `[0, 1]`.
fn rc(u: f64) -> f64 {
    (1.0 - (PI * u.clamp(0.0, 1.0)).cos()) / 2.0
}

/// Load shape of a SiSt event at time `t` with valleys at `ts`, `te` and the
/// peak at `ts + PEAK_FRACTION * (te - ts)`; `None` outside the event's
/// flanks.
fn sist_load(t: f64, ts: f64, te: f64, sit: f64, stand: f64, peak: f64, depth: f64) -> Option<f64> {
    let tp = ts + PEAK_FRACTION * (te - ts);
    let (v1, v2) = (sit - depth, stand - depth);
    if t < ts - FLANK_S || t > te + FLANK_S {
        None
    } else if t < ts {
        Some(sit - depth * rc((t - (ts - FLANK_S)) / FLANK_S))
    } else if t < tp {
        Some(v1 + (peak - v1) * rc((t - ts) / (tp - ts)))
    } else if t < te {
        Some(peak - (peak - v2) * rc((t - tp) / (te - tp)))
    } else {
        Some(v2 + (stand - v2) * rc((t - te) / FLANK_S))
    }
}

struct ImuEvent {
    start: f64,
    width: f64,
    az_amp: f64,
    gz_amp: f64,
    /// StSi flips the biphasic AZ pulse (time reversal).
    reversed: bool,
}

fn draw_timeline(cfg: &SimConfig, r: &mut StageRng) -> (Vec<SimEvent>, [f64; 2], [f64; 2]) {
    let fs = cfg.sample_rate;
    let snap = |t: f64| (t * fs).round() / fs;
    let d = cfg.durations;
    let normal = Normal::new(d.mean_s, d.sd_s.max(1e-12)).expect("valid duration model");
    let draw_duration = |r: &mut StageRng| {
        if d.sd_s == 0.0 {
            d.mean_s
        } else {
            normal.sample(r).clamp(d.min_s, d.max_s)
        }
    };
    let head_tap = snap(r.random_range(HEAD_TAP_S.0..HEAD_TAP_S.1));
    let walk_start = SWAY_END_S;
    let walk_end = walk_start + r.random_range(WALK_S.0..WALK_S.1);
    let mut t = walk_end + r.random_range(PAUSE_S.0..PAUSE_S.1);
    let mut events = Vec::new();
    let mut push = |kind: EventKind, start: f64, dur: f64| {
        let end = start + dur;
        let peak_frac = match kind {
            EventKind::Sist => PEAK_FRACTION,
            EventKind::Stsi => 1.0 - PEAK_FRACTION,
        };
        events.push(SimEvent {
            kind,
            start_s: start,
            end_s: end,
            duration_s: end - start,
            peak_time_s: start + peak_frac * dur,
            valley_times_s: [start, end],
        });
        end
    };
    // sit down once, then alternate; the last SiSt ends standing
    t = push(EventKind::Stsi, t, draw_duration(r));
    for i in 0..cfg.sist_count {
        t += r.random_range(PAUSE_S.0..PAUSE_S.1);
        t = push(EventKind::Sist, t, draw_duration(r));
        if i + 1 < cfg.sist_count {
            t += r.random_range(PAUSE_S.0..PAUSE_S.1);
            t = push(EventKind::Stsi, t, draw_duration(r));
        }
    }
    let tail_tap = snap(cfg.session_length_s - TAIL_TAP_BEFORE_END_S);
    (events, [head_tap, tail_tap], [walk_start, walk_end])
}

fn generate_session(cfg: &SimConfig, index: usize) -> SimSession {
    let mut r = rng(sub_seed(derive_seed(cfg.seed, "simulate"), index as u64));
    let fs = cfg.sample_rate;
    let n = (cfg.session_length_s * fs).round() as usize;
    let subject = Subject::draw(cfg, &mut r);
    let (events, taps, walking) = draw_timeline(cfg, &mut r);

    let imu_events: Vec<ImuEvent> = events
        .iter()
        .map(|e| ImuEvent {
            start: e.start_s + r.random_range(-0.3..0.3),
            width: e.duration_s * r.random_range(0.7..1.3),
            az_amp: 0.1 * r.random_range(0.6..1.4),
            gz_amp: 40.0 * r.random_range(0.6..1.4),
            reversed: e.kind == EventKind::Stsi,
        })
        .collect();
    let peaks: Vec<(f64, f64)> = events
        .iter()
        .map(|_| {
            (
                subject.stand_level + 0.8 * subject.load_scale * r.random_range(0.8..1.2),
                0.3 * subject.load_scale * r.random_range(0.8..1.2),
            )
        })
        .collect();
    let walk_phase = r.random_range(0.0..2.0 * PI);
    let sway_phase = r.random_range(0.0..2.0 * PI);

    // posture level: standing until the first StSi, then alternating
    let level_at = |t: f64| -> f64 {
        let mut standing = true;
        for e in &events {
            if t >= e.end_s {
                standing = e.kind == EventKind::Sist;
            }
        }
        if standing {
            subject.stand_level
        } else {
            subject.sit_level
        }
    };

    let mut base_load = vec![0.0; n];
    let mut ev_idx = 0;
    for (i, v) in base_load.iter_mut().enumerate() {
        let t = i as f64 / fs;
        while ev_idx < events.len() && t > events[ev_idx].end_s + FLANK_S {
            ev_idx += 1;
        }
        let mut value = None;
        if let Some(e) = events.get(ev_idx) {
            let (peak, depth) = peaks[ev_idx];
            let (sit, stand) = (subject.sit_level, subject.stand_level);
            value = match e.kind {
                EventKind::Sist => sist_load(t, e.start_s, e.end_s, sit, stand, peak, depth),
                // mirror time about the event center
                EventKind::Stsi => sist_load(e.start_s + e.end_s - t, e.start_s, e.end_s, sit, stand, peak, depth),
            };
        }
        *v = value.unwrap_or_else(|| level_at(t));
        if (QUIET_END_S..SWAY_END_S).contains(&t) {
            let env = rc((t - QUIET_END_S) / 1.0) * rc((SWAY_END_S - t) / 1.0);
            *v += 0.05 * subject.load_scale * env * (2.0 * PI * 0.3 * t + sway_phase).sin();
        }
    }

    let walk_env = |t: f64| -> f64 {
        if t < walking[0] || t > walking[1] {
            0.0
        } else {
            rc((t - walking[0]) / 0.5) * rc((walking[1] - t) / 0.5)
        }
    };

    let mut channels = vec![vec![0.0; n]; NUM_CHANNELS];
    for (fi, foot) in Foot::BOTH.into_iter().enumerate() {
        let gain = subject.foot_gain[fi];
        let wg = subject.walk_gain[fi];
        let phase = walk_phase + fi as f64 * PI;
        let [pitch, roll] = subject.tilt[fi];
        let idx = |k: ChannelKind| ChannelId::new(foot, k).index();
        for i in 0..n {
            let t = i as f64 / fs;
            let w = walk_env(t);
            let gait = 2.0 * PI * WALK_FREQ_HZ * t + phase;
            let load = gain * base_load[i] + w * wg * subject.load_scale * 0.6 * gait.sin();

            let (mut ax, mut ay, mut az) = (0.0, 0.0, 1.0);
            let (mut gx, mut gy, mut gz) = (0.0, 0.0, 0.0);
            for ev in &imu_events {
                let u = (t - ev.start) / ev.width;
                if (0.0..=1.0).contains(&u) {
                    let sign = if ev.reversed { -1.0 } else { 1.0 };
                    az += sign * ev.az_amp * (2.0 * PI * u).sin();
                    ax += 0.3 * ev.az_amp * (PI * u).sin();
                    gz += ev.gz_amp * rc(2.0 * u.min(1.0 - u).max(0.0));
                    gy += 0.2 * ev.gz_amp * (PI * u).sin();
                }
            }
            ax += w * wg * 0.4 * gait.sin();
            az += w * wg * 0.3 * (2.0 * gait).sin();
            ay += w * wg * 0.1 * gait.cos();
            gy += w * wg * 150.0 * gait.sin();
            gx += w * wg * 30.0 * gait.cos();
            gz += w * wg * 20.0 * (2.0 * gait).sin();

            // small fixed sensor tilt: pitch about y, then roll about x
            let rot = |x: f64, y: f64, z: f64| {
                let (x1, z1) = (x * pitch.cos() + z * pitch.sin(), -x * pitch.sin() + z * pitch.cos());
                let (y2, z2) = (y * roll.cos() - z1 * roll.sin(), y * roll.sin() + z1 * roll.cos());
                (x1, y2, z2)
            };
            let (ax, ay, az) = rot(ax, ay, az);
            let (gx, gy, gz) = rot(gx, gy, gz);
            channels[idx(ChannelKind::Load)][i] = load;
            channels[idx(ChannelKind::AccX)][i] = ax;
            channels[idx(ChannelKind::AccY)][i] = ay;
            channels[idx(ChannelKind::AccZ)][i] = az;
            channels[idx(ChannelKind::GyroX)][i] = gx;
            channels[idx(ChannelKind::GyroY)][i] = gy;
            channels[idx(ChannelKind::GyroZ)][i] = gz;
        }
    }

    if cfg.noise_level > 0.0 {
        for (c, ch) in channels.iter_mut().enumerate() {
            let scale = match ChannelId::from_index(c).kind {
                ChannelKind::Load => LOAD_NOISE_SCALE,
                ChannelKind::AccX | ChannelKind::AccY | ChannelKind::AccZ => ACC_NOISE_SCALE,
                _ => GYRO_NOISE_SCALE,
            };
            let normal = Normal::new(0.0, cfg.noise_level * scale).expect("finite sigma");
            for v in ch.iter_mut() {
                *v += normal.sample(&mut r);
            }
        }
    }
    for tap in taps {
        let i = ((tap * fs).round() as usize).min(n - 1);
        for foot in Foot::BOTH {
            channels[ChannelId::new(foot, ChannelKind::Load).index()][i] += TAP_HEIGHT;
        }
    }

    let participant_id = format!("P{:02}", index + 1);
    let session_id = format!("{participant_id}_S1");
    let ann = AnnotationSet {
        sist: events
            .iter()
            .filter(|e| e.kind == EventKind::Sist)
            .map(|e| Interval::new(e.start_s, e.end_s))
            .collect(),
        stsi: events
            .iter()
            .filter(|e| e.kind == EventKind::Stsi)
            .map(|e| Interval::new(e.start_s, e.end_s))
            .collect(),
    };
    let recording = SessionRecording::new(&participant_id, &session_id, 0.0, fs, channels, ann)
        .expect("generated signals are finite");
    SimSession {
        recording,
        truth: TruthLog {
            participant_id,
            session_id,
            events,
            tap_times_s: taps,
            walking_s: walking,
        },
    }
}

/// One session per participant, each from its own sub-seed.
pub fn generate_corpus(cfg: &SimConfig) -> Result<Vec<SimSession>> {
    cfg.validate()?;
    Ok((0..cfg.n_participants)
        .into_par_iter()
        .map(|i| generate_session(cfg, i))
        .collect())
}

/// Clock error injected into one foot's exported timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClockError {
    /// Sensor clock minus true clock at the head tap.
    pub offset_s: f64,
    /// Additional sensor clock error accumulated between the taps.
    pub drift_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportOptions {
    pub clock: [ClockError; 2],
}

/// Writes one directory per session in the ingest formats; returns the
/// session directories in order.
pub fn export_corpus(sessions: &[SimSession], dir: &Path, opts: &ExportOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    sessions
        .par_iter()
        .map(|s| {
            let sdir = dir.join(&s.truth.session_id);
            export_session(s, &sdir, opts)?;
            Ok(sdir)
        })
        .collect()
}

pub fn export_session(s: &SimSession, dir: &Path, opts: &ExportOptions) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rec = &s.recording;
    let [tap_start, tap_end] = s.truth.tap_times_s;
    for (fi, foot) in Foot::BOTH.into_iter().enumerate() {
        let clock = opts.clock[fi];
        let rate = clock.drift_s / (tap_end - tap_start);
        let timestamps = (0..rec.len())
            .map(|i| {
                let t = rec.t0 + rec.time_of(i);
                t + clock.offset_s + rate * (t - tap_start)
            })
            .collect();
        let channels = ChannelKind::ALL.map(|k| rec.channel(ChannelId::new(foot, k)).to_vec());
        let raw = RawFootFile {
            foot,
            timestamps,
            channels,
        };
        let name = format!("{}.csv", foot_file_stem(foot));
        write_foot_file(&dir.join(&name), &raw)?;
    }
    write_annotations(&dir.join("annotations.json"), &rec.annotations)?;
    let truth = serde_json::to_string_pretty(&s.truth).map_err(|e| Error::json("truth events", e))?;
    let truth_path = dir.join(TRUTH_FILE);
    fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;
    SessionManifest {
        participant_id: s.truth.participant_id.clone(),
        session_id: Some(s.truth.session_id.clone()),
        left_csv: "left.csv".into(),
        right_csv: "right.csv".into(),
        video_tap_start_s: tap_start,
        video_tap_end_s: tap_end,
        annotations: "annotations.json".into(),
    }
    .write(&dir.join(MANIFEST_FILE))
}

fn foot_file_stem(foot: Foot) -> &'static str {
    match foot {
        Foot::Left => "left",
        Foot::Right => "right",
    }
}

pub fn read_truth(dir: &Path) -> Result<TruthLog> {
    let path = dir.join(TRUTH_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(TRUTH_FILE, e))
}
