//! End-to-end training and inference: per-session window features, training
//! set assembly with both balancing stages, model fitting, detection and
//! model persistence.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::augment::{plan_balance, smote, SignalAugmenter, WindowTensor};
use crate::classifier::grid::{grid_search_bagged, GridCell};
use crate::classifier::{BaggedEnsemble, BaggedParams, DecisionTree, GroupedSet, NodeRecord};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{mrmr_select, FeatureCatalog, FeatureExtractor, StandardScaler};
use crate::model::{ChannelNorm, Interval, SessionRecording};
use crate::postprocess::{majority_vote, measure_all, merge_segments, SistSegment};
use crate::seed::derive_seed;
use crate::windowing::{build_grid, LabeledWindow, WindowSpec};

/// Hex SHA-256 over the little-endian bits of every value, row by row.
pub fn hash_rows<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut h = Sha256::new();
    for r in rows {
        h.update((r.len() as u64).to_le_bytes());
        for v in r {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn hash_vecs(rows: &[Vec<f64>]) -> String {
    hash_rows(rows.iter().map(Vec::as_slice))
}

/// Window grid and raw feature rows of one session.
#[derive(Debug, Clone)]
pub struct SessionFeatures {
    pub grid: Vec<LabeledWindow>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Session-level channel moments used to normalize every window.
    pub norm: ChannelNorm,
}

impl SessionFeatures {
    pub fn compute(rec: &SessionRecording, spec: &WindowSpec, extractor: &FeatureExtractor) -> Result<SessionFeatures> {
        let grid = build_grid(rec, spec)?;
        let norm = rec.channel_norm();
        let features = grid
            .par_iter()
            .map(|w| extractor.extract(&rec.slice(w.start_idx, w.end_idx), &norm))
            .collect::<Result<Vec<_>>>()?;
        let labels = grid.iter().map(|w| w.label).collect();
        Ok(SessionFeatures { grid, features, labels, norm })
    }

    pub fn content_hash(&self) -> String {
        hash_vecs(&self.features)
    }
}

/// Class counts of an assembled training set, per origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainCounts {
    pub original_pos: usize,
    pub original_neg: usize,
    pub signal: usize,
    pub smote: usize,
}

impl TrainCounts {
    pub fn positives(&self) -> usize {
        self.original_pos + self.signal + self.smote
    }

    pub fn total(&self) -> usize {
        self.positives() + self.original_neg
    }
}

/// Raw training rows: original windows plus signal-augmented positives.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Participant group of each row (index into the session list).
    pub groups: Vec<usize>,
    pub original: Vec<bool>,
    pub counts: TrainCounts,
}

impl TrainingSet {
    /// `sessions` pairs each recording with its features; the group of a row
    /// is the position of its participant in sorted participant order.
    pub fn assemble(
        sessions: &[(&SessionRecording, &SessionFeatures)],
        extractor: &FeatureExtractor,
        cfg: &PipelineConfig,
        seed: u64,
    ) -> Result<TrainingSet> {
        let mut participants: Vec<&str> = sessions.iter().map(|(r, _)| r.participant_id.as_str()).collect();
        participants.sort_unstable();
        participants.dedup();
        let group_of = |pid: &str| participants.binary_search(&pid).expect("participant listed");

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        let mut positives: Vec<WindowTensor> = Vec::new();
        let mut pos_source: Vec<usize> = Vec::new();
        for (si, (rec, feats)) in sessions.iter().enumerate() {
            let g = group_of(&rec.participant_id);
            for (w, row) in feats.grid.iter().zip(&feats.features) {
                rows.push(row.clone());
                labels.push(w.label);
                groups.push(g);
                if w.label == 1 {
                    positives.push(rec.slice(w.start_idx, w.end_idx));
                    pos_source.push(si);
                }
            }
        }
        let pos = positives.len();
        let neg = rows.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateLabels(format!("{pos} positive and {neg} negative training windows")));
        }
        let (signal_deficit, _) = plan_balance(pos, neg);
        let mut original = vec![true; rows.len()];
        if signal_deficit > 0 {
            let aug = SignalAugmenter::new(&positives, &cfg.durations, &cfg.augment, seed)?;
            let synth = (0..signal_deficit)
                .into_par_iter()
                .map(|i| {
                    let s = aug.generate(i);
                    let si = pos_source[s.source];
                    let row = extractor.extract(&s.data, &sessions[si].1.norm)?;
                    Ok((row, group_of(&sessions[si].0.participant_id)))
                })
                .collect::<Result<Vec<_>>>()?;
            for (row, g) in synth {
                rows.push(row);
                labels.push(1);
                groups.push(g);
                original.push(false);
            }
        }
        let counts = TrainCounts {
            original_pos: pos,
            original_neg: neg,
            signal: signal_deficit,
            smote: 0,
        };
        Ok(TrainingSet { rows, labels, groups, original, counts })
    }
}

/// Content hashes of every stage input, captured while fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitTrace {
    pub scaler_input: String,
    pub scaler_moments: String,
    pub selection_input: String,
    pub selection_rows: usize,
}

/// Fitting options beyond the pipeline config.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions<'a> {
    /// Restricts feature selection to these catalog indices.
    pub universe: Option<&'a [usize]>,
    /// Extra rows appended to the selection input only. Exists so tests can
    /// inject a deliberate leak and prove the audit catches it.
    #[doc(hidden)]
    pub selection_leak: Option<(&'a [Vec<f64>], &'a [u8])>,
}

/// A fitted detector: scaler and selected columns, bagged ensemble, and the
/// post-processing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDetector {
    pub spec: WindowSpec,
    pub sample_rate: f64,
    pub selected: Vec<usize>,
    /// Scaler restricted to `selected`.
    pub scaler: StandardScaler,
    pub ensemble: BaggedEnsemble,
    pub vote_windows: usize,
    pub valley_margin_s: f64,
}

/// Everything produced by one fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub detector: TrainedDetector,
    pub mrmr_scores: Vec<f64>,
    pub grid_cells: Vec<GridCell<BaggedParams>>,
    pub counts: TrainCounts,
    pub trace: FitTrace,
}

fn moments_hash(s: &StandardScaler) -> String {
    hash_rows([s.means.as_slice(), s.stds.as_slice()])
}

/// Expected audit hashes for a training set, computed independently of the
/// fitting path.
pub fn expected_trace(train: &TrainingSet) -> Result<FitTrace> {
    let scaler = StandardScaler::fit(&train.rows)?;
    let scaled = scaler.transform(&train.rows)?;
    Ok(FitTrace {
        scaler_input: hash_vecs(&train.rows),
        scaler_moments: moments_hash(&scaler),
        selection_input: hash_vecs(&scaled),
        selection_rows: scaled.len(),
    })
}

/// Scaler, mRMR, SMOTE in the selected space, grid search, final ensemble.
pub fn fit_detector(
    train: &TrainingSet,
    spec: &WindowSpec,
    sample_rate: f64,
    cfg: &PipelineConfig,
    opts: FitOptions<'_>,
    seed: u64,
) -> Result<FitOutcome> {
    let scaler = StandardScaler::fit(&train.rows)?;
    let scaled = scaler.transform(&train.rows)?;
    let mut sel_rows: Vec<Vec<f64>> = Vec::new();
    let mut sel_labels: Vec<u8> = Vec::new();
    let (sel_input, sel_lab): (&[Vec<f64>], &[u8]) = match opts.selection_leak {
        None => (&scaled, &train.labels),
        Some((extra, extra_labels)) => {
            sel_rows.extend(scaled.iter().cloned());
            sel_rows.extend(scaler.transform(extra)?);
            sel_labels.extend_from_slice(&train.labels);
            sel_labels.extend_from_slice(extra_labels);
            (&sel_rows, &sel_labels)
        }
    };
    let trace = FitTrace {
        scaler_input: hash_vecs(&train.rows),
        scaler_moments: moments_hash(&scaler),
        selection_input: hash_vecs(sel_input),
        selection_rows: sel_input.len(),
    };
    let selection = mrmr_select(sel_input, sel_lab, cfg.mrmr_k, opts.universe)?;
    drop(sel_rows);

    let mut rows: Vec<Vec<f64>> = scaled
        .iter()
        .map(|r| selection.selected.iter().map(|&c| r[c]).collect())
        .collect();
    let mut labels = train.labels.clone();
    let mut groups = train.groups.clone();
    let mut original = train.original.clone();

    let minority_idx: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == 1).collect();
    let neg = labels.len() - minority_idx.len();
    let deficit = neg.saturating_sub(minority_idx.len());
    let minority: Vec<Vec<f64>> = minority_idx.iter().map(|&i| rows[i].clone()).collect();
    let samples = smote(&minority, &cfg.smote, deficit, derive_seed(seed, "smote"))?;
    for s in samples {
        groups.push(groups[minority_idx[s.source]]);
        rows.push(s.row);
        labels.push(1);
        original.push(false);
    }
    let mut counts = train.counts;
    counts.smote = deficit;

    let set = GroupedSet { rows: &rows, labels: &labels, groups: &groups, original: &original };
    let outcome = grid_search_bagged(&set, &cfg.grid, derive_seed(seed, "grid"))?;
    let ensemble = BaggedEnsemble::fit(&rows, &labels, outcome.best, derive_seed(seed, "trees"))?;
    Ok(FitOutcome {
        detector: TrainedDetector {
            spec: *spec,
            sample_rate,
            scaler: scaler.select(&selection.selected),
            selected: selection.selected,
            ensemble,
            vote_windows: cfg.vote_windows,
            valley_margin_s: cfg.valley_margin_s,
        },
        mrmr_scores: selection.scores,
        grid_cells: outcome.cells,
        counts,
        trace,
    })
}

/// Window predictions and measured segments for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub raw: Vec<u8>,
    pub scores: Vec<f64>,
    pub smoothed: Vec<u8>,
    pub segments: Vec<SistSegment>,
}

impl Detection {
    pub fn segment_intervals(&self, sample_rate: f64) -> Vec<Interval> {
        self.segments
            .iter()
            .map(|s| Interval::new(s.start_idx as f64 / sample_rate, s.end_idx as f64 / sample_rate))
            .collect()
    }
}

impl TrainedDetector {
    /// Labels and positive scores for raw (unscaled, full-catalog) rows.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<(u8, f64)>> {
        let projected = features
            .iter()
            .map(|r| {
                if r.len() <= self.selected.iter().copied().max().unwrap_or(0) {
                    return Err(Error::Dimension { expected: FeatureCatalog::standard().len(), got: r.len() });
                }
                let picked: Vec<f64> = self.selected.iter().map(|&c| r[c]).collect();
                self.scaler.transform_row(&picked)
            })
            .collect::<Result<Vec<_>>>()?;
        self.ensemble.predict_many(&projected)
    }

    /// Classifies, smooths, merges and measures.
    pub fn detect_features(&self, rec: &SessionRecording, feats: &SessionFeatures) -> Result<Detection> {
        let pred = self.predict(&feats.features)?;
        let raw: Vec<u8> = pred.iter().map(|p| p.0).collect();
        let scores = pred.iter().map(|p| p.1).collect();
        let smoothed = majority_vote(&raw, self.vote_windows)?;
        let mut segments = merge_segments(&smoothed, &feats.grid)?;
        measure_all(rec, &mut segments, self.valley_margin_s)?;
        Ok(Detection { raw, scores, smoothed, segments })
    }

    pub fn detect(&self, rec: &SessionRecording) -> Result<Detection> {
        if (rec.sample_rate - self.sample_rate).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "session sampled at {} Hz, model trained at {} Hz",
                rec.sample_rate, self.sample_rate
            )));
        }
        let extractor = FeatureExtractor::new(self.spec.window_samples(rec.sample_rate), rec.sample_rate)?;
        let feats = SessionFeatures::compute(rec, &self.spec, &extractor)?;
        self.detect_features(rec, &feats)
    }

    pub fn to_file(&self) -> ModelFile {
        let catalog = FeatureCatalog::standard();
        let mut file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            catalog_checksum: catalog.checksum().to_string(),
            model_checksum: String::new(),
            spec: self.spec,
            sample_rate: self.sample_rate,
            selected: self.selected.clone(),
            selected_names: self.selected.iter().map(|&i| catalog.entries()[i].name.clone()).collect(),
            scaler: self.scaler.clone(),
            params: self.ensemble.params,
            seed: self.ensemble.seed,
            vote_windows: self.vote_windows,
            valley_margin_s: self.valley_margin_s,
            trees: self.ensemble.trees.iter().map(DecisionTree::to_record).collect(),
        };
        file.model_checksum = file.body_checksum();
        file
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file()).map_err(|e| Error::json("model", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedDetector> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        de.disable_recursion_limit();
        let file = ModelFile::deserialize(&mut de).map_err(|e| Error::json(&path.display().to_string(), e))?;
        file.into_detector()
    }
}

pub const MODEL_FORMAT: &str = "sist-detector/1";

/// Self-describing serialized form of a [`TrainedDetector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub catalog_checksum: String,
    /// SHA-256 of the canonical JSON of every other field.
    pub model_checksum: String,
    pub spec: WindowSpec,
    pub sample_rate: f64,
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub scaler: StandardScaler,
    pub params: BaggedParams,
    pub seed: u64,
    pub vote_windows: usize,
    pub valley_margin_s: f64,
    pub trees: Vec<NodeRecord>,
}

impl ModelFile {
    fn body_checksum(&self) -> String {
        let mut v = serde_json::to_value(self).expect("model serializes");
        if let Value::Object(map) = &mut v {
            map.remove("model_checksum");
        }
        // serde_json maps are sorted, so this rendering is canonical
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn into_detector(self) -> Result<TrainedDetector> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Checksum(format!("unsupported model format `{}`", self.format)));
        }
        let catalog = FeatureCatalog::standard();
        if self.catalog_checksum != catalog.checksum() {
            return Err(Error::Checksum(format!(
                "model was built for feature catalog {}, running catalog is {}",
                self.catalog_checksum,
                catalog.checksum()
            )));
        }
        let actual = self.body_checksum();
        if actual != self.model_checksum {
            return Err(Error::Checksum(format!(
                "model content hash {actual} does not match recorded {}; the file was modified",
                self.model_checksum
            )));
        }
        let k = self.selected.len();
        if k == 0 || self.selected.iter().any(|&i| i >= catalog.len()) || self.scaler.dim() != k {
            return Err(Error::Format {
                context: "model".into(),
                message: "selected features do not match the scaler or catalog".into(),
            });
        }
        let trees: Vec<DecisionTree> = self.trees.iter().map(DecisionTree::from_record).collect();
        if trees.is_empty() || trees.iter().any(|t| t.max_feature().is_some_and(|f| f >= k)) {
            return Err(Error::Format {
                context: "model".into(),
                message: "tree list is empty or references unknown features".into(),
            });
        }
        self.spec.validate()?;
        Ok(TrainedDetector {
            spec: self.spec,
            sample_rate: self.sample_rate,
            selected: self.selected,
            scaler: self.scaler,
            ensemble: BaggedEnsemble { trees, params: self.params, seed: self.seed, dim: k },
            vote_windows: self.vote_windows,
            valley_margin_s: self.valley_margin_s,
        })
    }
}

/// Assembles the training set from every session and fits one detector.
pub fn train_detector(sessions: &[SessionRecording], spec: &WindowSpec, cfg: &PipelineConfig) -> Result<FitOutcome> {
    let first = sessions.first().ok_or_else(|| Error::Empty("training corpus".into()))?;
    let fs = first.sample_rate;
    if sessions.iter().any(|s| (s.sample_rate - fs).abs() > 1e-9) {
        return Err(Error::Config("sessions differ in sample rate".into()));
    }
    let extractor = FeatureExtractor::new(spec.window_samples(fs), fs)?;
    let feats = sessions
        .iter()
        .map(|s| SessionFeatures::compute(s, spec, &extractor))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = sessions.iter().zip(&feats).collect();
    let train = TrainingSet::assemble(&pairs, &extractor, cfg, derive_seed(cfg.seed, "augment"))?;
    fit_detector(&train, spec, fs, cfg, FitOptions::default(), cfg.seed)
}
