//! Participant-fold cross-validation driver with a content-hash leakage
//! audit, and the report types it produces.

use serde::{Deserialize, Serialize};

use super::duration::{duration_errors, match_segments, DurationErrors, RegimeErrors};
use super::folds::{make_folds, FoldPlan};
use super::metrics::{classification_metrics, ClassificationMetrics, ConfusionCounts};
use crate::classifier::grid::GridCell;
use crate::classifier::BaggedParams;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureCatalog, FeatureExtractor};
use crate::model::SessionRecording;
use crate::pipeline::{
    expected_trace, fit_detector, FitOptions, FitTrace, SessionFeatures, TrainCounts, TrainingSet,
};
use crate::seed::derive_seed;
use crate::windowing::WindowSpec;

/// Name of the full-catalog variant.
pub const WITH_LOAD: &str = "with_load";
/// Name of the ablation that removes load-cell features from selection.
pub const WITHOUT_LOAD: &str = "without_load";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub sd: Option<f64>,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<MeanSd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(MeanSd { mean, sd, n })
    }
}

/// Hashes proving which data each fitted stage saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub train_participants: Vec<String>,
    pub test_participants: Vec<String>,
    /// Test-session feature hashes before training and after prediction.
    pub test_features_before: Vec<String>,
    pub test_features_after: Vec<String>,
    /// Hashes recorded inside the fit.
    pub observed: FitTrace,
    /// Hashes recomputed from the training set alone.
    pub expected: FitTrace,
}

impl FoldAudit {
    pub fn verify(&self) -> Result<()> {
        if let Some(p) = self.test_participants.iter().find(|p| self.train_participants.contains(p)) {
            return Err(Error::Leakage(format!("participant {p} is in both training and test data")));
        }
        if self.test_features_before != self.test_features_after {
            return Err(Error::Leakage("test-fold windows changed during training".into()));
        }
        if self.observed.scaler_input != self.expected.scaler_input {
            return Err(Error::Leakage("scaler was fit on rows other than the training set".into()));
        }
        if self.observed.scaler_moments != self.expected.scaler_moments {
            return Err(Error::Leakage("scaler moments differ from training-only moments".into()));
        }
        if self.observed.selection_input != self.expected.selection_input
            || self.observed.selection_rows != self.expected.selection_rows
        {
            return Err(Error::Leakage(format!(
                "feature selection saw {} rows, training set has {}",
                self.observed.selection_rows, self.expected.selection_rows
            )));
        }
        Ok(())
    }
}

/// One predicted segment and its match against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub session_id: String,
    pub participant_id: String,
    pub segment_id: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub valley1_s: f64,
    pub peak_s: f64,
    pub valley2_s: f64,
    pub measured_s: f64,
    pub degenerate: bool,
    pub truth_index: Option<usize>,
    pub truth_duration_s: Option<f64>,
    pub overlap: f64,
    pub iou: f64,
    pub is_tp: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub tp: usize,
    pub fp: usize,
    /// Ground-truth transitions with no matching segment.
    pub missed: usize,
    /// Segments whose duration fell back to the segment span.
    pub degenerate: usize,
}

impl SegmentCounts {
    fn add(&mut self, o: &SegmentCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.missed += o.missed;
        self.degenerate += o.degenerate;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_participants: Vec<String>,
    pub train_counts: TrainCounts,
    pub selected_features: Vec<String>,
    pub best_params: BaggedParams,
    pub grid_cells: Vec<GridCell<BaggedParams>>,
    /// Counts after majority voting.
    pub window_counts: ConfusionCounts,
    pub window: ClassificationMetrics,
    /// Counts of the classifier output before voting.
    pub raw_window_counts: ConfusionCounts,
    pub raw_window: ClassificationMetrics,
    pub segments: SegmentCounts,
    pub duration_errors: DurationErrors,
    pub duration_tp: Option<RegimeErrors>,
    pub duration_all: Option<RegimeErrors>,
    pub audit: FoldAudit,
    pub matches: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub mae_s: Option<MeanSd>,
    pub rmse_s: Option<MeanSd>,
    /// Over all folds' errors pooled.
    pub pooled: Option<RegimeErrors>,
}

impl RegimeSummary {
    fn from_folds(per_fold: &[Option<RegimeErrors>], pooled: Option<RegimeErrors>) -> RegimeSummary {
        let mae: Vec<f64> = per_fold.iter().flatten().map(|r| r.mae_s).collect();
        let rmse: Vec<f64> = per_fold.iter().flatten().map(|r| r.rmse_s).collect();
        RegimeSummary { mae_s: MeanSd::of(&mae), rmse_s: MeanSd::of(&rmse), pooled }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub accuracy: MeanSd,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
    pub raw_f1: MeanSd,
    pub pooled_counts: ConfusionCounts,
    pub pooled: ClassificationMetrics,
    pub segments: SegmentCounts,
    pub duration_tp: RegimeSummary,
    pub duration_all: RegimeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: String,
    pub summary: VariantSummary,
    pub folds: Vec<FoldReport>,
}

impl VariantReport {
    fn from_folds(variant: &str, folds: Vec<FoldReport>) -> Result<VariantReport> {
        let series = |f: &dyn Fn(&FoldReport) -> f64| -> Result<MeanSd> {
            MeanSd::of(&folds.iter().map(f).collect::<Vec<_>>()).ok_or_else(|| Error::Empty("fold reports".into()))
        };
        let mut pooled_counts = ConfusionCounts::default();
        let mut segments = SegmentCounts::default();
        let mut errors = DurationErrors { tp_errors: Vec::new(), fp_penalties: Vec::new(), missed: 0 };
        for f in &folds {
            pooled_counts.add(&f.window_counts);
            segments.add(&f.segments);
            errors.extend(&f.duration_errors);
        }
        let tp: Vec<_> = folds.iter().map(|f| f.duration_tp).collect();
        let all: Vec<_> = folds.iter().map(|f| f.duration_all).collect();
        let summary = VariantSummary {
            accuracy: series(&|f| f.window.accuracy)?,
            precision: series(&|f| f.window.precision)?,
            recall: series(&|f| f.window.recall)?,
            f1: series(&|f| f.window.f1)?,
            raw_f1: series(&|f| f.raw_window.f1)?,
            pooled: classification_metrics(&pooled_counts)?,
            pooled_counts,
            segments,
            duration_tp: RegimeSummary::from_folds(&tp, errors.tp_only().ok()),
            duration_all: RegimeSummary::from_folds(&all, errors.all().ok()),
        };
        Ok(VariantReport { variant: variant.to_string(), summary, folds })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReport {
    pub spec: WindowSpec,
    pub label: String,
    pub windows: usize,
    pub positive_windows: usize,
    pub variants: Vec<VariantReport>,
}

impl SpecReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.variant == name)
    }
}

/// Run identification; holds no timestamps so reports are byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub catalog_checksum: String,
    pub seed: u64,
    pub sessions: usize,
    pub fold_plan: FoldPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub meta: ReportMeta,
    pub specs: Vec<SpecReport>,
}

/// Test-only fault injection.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CvHooks {
    /// Feeds the test-fold rows into feature selection.
    pub fit_selection_on_all_rows: bool,
}

/// Runs participant-fold CV for every window spec of `cfg`.
pub fn run_cv(sessions: &[SessionRecording], cfg: &PipelineConfig) -> Result<CvReport> {
    run_cv_with(sessions, cfg, CvHooks::default())
}

#[doc(hidden)]
pub fn run_cv_with(sessions: &[SessionRecording], cfg: &PipelineConfig, hooks: CvHooks) -> Result<CvReport> {
    cfg.validate()?;
    let first = sessions.first().ok_or_else(|| Error::Empty("corpus".into()))?;
    let fs = first.sample_rate;
    if sessions.iter().any(|s| (s.sample_rate - fs).abs() > 1e-9) {
        return Err(Error::Config("sessions differ in sample rate".into()));
    }
    let participants: Vec<String> = sessions.iter().map(|s| s.participant_id.clone()).collect();
    let plan = make_folds(&participants, cfg.folds, derive_seed(cfg.seed, "folds"))?;
    let specs = cfg
        .window_specs()?
        .iter()
        .map(|spec| run_spec(sessions, spec, fs, &plan, cfg, hooks))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport {
        meta: ReportMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            catalog_checksum: FeatureCatalog::standard().checksum().to_string(),
            seed: cfg.seed,
            sessions: sessions.len(),
            fold_plan: plan,
        },
        specs,
    })
}

fn run_spec(
    sessions: &[SessionRecording],
    spec: &WindowSpec,
    fs: f64,
    plan: &FoldPlan,
    cfg: &PipelineConfig,
    hooks: CvHooks,
) -> Result<SpecReport> {
    let extractor = FeatureExtractor::new(spec.window_samples(fs), fs)?;
    let feats = sessions
        .iter()
        .map(|s| SessionFeatures::compute(s, spec, &extractor))
        .collect::<Result<Vec<_>>>()?;
    let no_load = FeatureCatalog::standard().without_load();
    let mut variants: Vec<(&str, Option<&[usize]>)> = vec![(WITH_LOAD, None)];
    if cfg.ablation {
        variants.push((WITHOUT_LOAD, Some(&no_load)));
    }
    let mut per_variant: Vec<Vec<FoldReport>> = vec![Vec::new(); variants.len()];
    for (fi, test_ids) in plan.folds.iter().enumerate() {
        let is_test = |s: &SessionRecording| test_ids.contains(&s.participant_id);
        let train_pairs: Vec<_> = sessions.iter().zip(&feats).filter(|(s, _)| !is_test(s)).collect();
        let test_pairs: Vec<_> = sessions.iter().zip(&feats).filter(|(s, _)| is_test(s)).collect();
        if test_pairs.is_empty() {
            return Err(Error::TooFewParticipants { got: 0, k: cfg.folds });
        }
        let before: Vec<String> = test_pairs.iter().map(|(_, f)| f.content_hash()).collect();
        let tag = format!("{}/{}/fold{fi}", spec.primary_s, spec.n);
        let train = TrainingSet::assemble(&train_pairs, &extractor, cfg, derive_seed(cfg.seed, &format!("augment/{tag}")))?;
        let expected = expected_trace(&train)?;
        let mut train_participants: Vec<String> = train_pairs.iter().map(|(s, _)| s.participant_id.clone()).collect();
        train_participants.sort();
        train_participants.dedup();

        let leak_rows: Vec<Vec<f64>>;
        let leak_labels: Vec<u8>;
        let leak = if hooks.fit_selection_on_all_rows {
            leak_rows = test_pairs.iter().flat_map(|(_, f)| f.features.iter().cloned()).collect();
            leak_labels = test_pairs.iter().flat_map(|(_, f)| f.labels.iter().copied()).collect();
            Some((leak_rows.as_slice(), leak_labels.as_slice()))
        } else {
            None
        };

        for (vi, (_, universe)) in variants.iter().enumerate() {
            let opts = FitOptions { universe: *universe, selection_leak: leak };
            let fit = fit_detector(&train, spec, fs, cfg, opts, derive_seed(cfg.seed, &format!("fit/{tag}")))?;
            let det = &fit.detector;
            let mut counts = ConfusionCounts::default();
            let mut raw_counts = ConfusionCounts::default();
            let mut segs = SegmentCounts::default();
            let mut errors = DurationErrors { tp_errors: Vec::new(), fp_penalties: Vec::new(), missed: 0 };
            let mut matches = Vec::new();
            for (rec, f) in &test_pairs {
                let d = det.detect_features(rec, f)?;
                counts.add(&ConfusionCounts::from_labels(&f.labels, &d.smoothed));
                raw_counts.add(&ConfusionCounts::from_labels(&f.labels, &d.raw));
                let truth = &rec.annotations.sist;
                let table = match_segments(&d.segment_intervals(fs), truth);
                let measured: Vec<f64> = d.segments.iter().map(|s| s.measured.expect("measured").duration_s).collect();
                let truth_d: Vec<f64> = truth.iter().map(|t| t.duration()).collect();
                let e = duration_errors(&table, &measured, &truth_d)?;
                errors.extend(&e);
                segs.add(&SegmentCounts {
                    tp: table.tp_count(),
                    fp: table.fp_count(),
                    missed: table.missed.len(),
                    degenerate: d.segments.iter().filter(|s| s.measured.is_some_and(|m| m.degenerate)).count(),
                });
                for m in &table.matches {
                    let s = &d.segments[m.predicted];
                    let mm = s.measured.expect("measured");
                    matches.push(SegmentRecord {
                        session_id: rec.session_id.clone(),
                        participant_id: rec.participant_id.clone(),
                        segment_id: m.predicted,
                        start_s: s.start_idx as f64 / fs,
                        end_s: s.end_idx as f64 / fs,
                        valley1_s: mm.valley1_idx as f64 / fs,
                        peak_s: mm.peak_idx as f64 / fs,
                        valley2_s: mm.valley2_idx as f64 / fs,
                        measured_s: mm.duration_s,
                        degenerate: mm.degenerate,
                        truth_index: m.truth,
                        truth_duration_s: m.truth.map(|t| truth_d[t]),
                        overlap: m.overlap,
                        iou: m.iou,
                        is_tp: m.is_tp,
                    });
                }
            }
            let after: Vec<String> = test_pairs.iter().map(|(_, f)| f.content_hash()).collect();
            let audit = FoldAudit {
                train_participants: train_participants.clone(),
                test_participants: test_ids.clone(),
                test_features_before: before.clone(),
                test_features_after: after,
                observed: fit.trace.clone(),
                expected: expected.clone(),
            };
            audit.verify()?;
            let catalog = FeatureCatalog::standard();
            per_variant[vi].push(FoldReport {
                fold: fi,
                test_participants: test_ids.clone(),
                train_counts: fit.counts,
                selected_features: det.selected.iter().map(|&i| catalog.entries()[i].name.clone()).collect(),
                best_params: det.ensemble.params,
                grid_cells: fit.grid_cells.clone(),
                window_counts: counts,
                window: classification_metrics(&counts)?,
                raw_window_counts: raw_counts,
                raw_window: classification_metrics(&raw_counts)?,
                segments: segs,
                duration_tp: errors.tp_only().ok(),
                duration_all: errors.all().ok(),
                duration_errors: errors,
                audit,
                matches,
            });
        }
    }
    let variants = variants
        .iter()
        .zip(per_variant)
        .map(|((name, _), folds)| VariantReport::from_folds(name, folds))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpecReport {
        spec: *spec,
        label: spec.label(),
        windows: feats.iter().map(|f| f.labels.len()).sum(),
        positive_windows: feats.iter().map(|f| f.labels.iter().filter(|&&l| l == 1).count()).sum(),
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_sample_convention() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        let oracle = ((2.25 + 0.25 + 0.25 + 2.25) / 3.0f64).sqrt();
        assert!((m.sd.unwrap() - oracle).abs() < 1e-15);
        assert_eq!(MeanSd::of(&[0.7]).unwrap().sd, None);
        assert!(MeanSd::of(&[]).is_none());
    }

    fn trace(tag: &str, rows: usize) -> FitTrace {
        FitTrace {
            scaler_input: tag.into(),
            scaler_moments: tag.into(),
            selection_input: tag.into(),
            selection_rows: rows,
        }
    }

    fn clean_audit() -> FoldAudit {
        FoldAudit {
            train_participants: vec!["A".into(), "B".into()],
            test_participants: vec!["C".into()],
            test_features_before: vec!["h".into()],
            test_features_after: vec!["h".into()],
            observed: trace("x", 10),
            expected: trace("x", 10),
        }
    }

    #[test]
    fn audit_detects_each_violation() {
        clean_audit().verify().unwrap();
        let mut a = clean_audit();
        a.test_participants.push("A".into());
        assert!(matches!(a.verify(), Err(Error::Leakage(_))));
        let mut a = clean_audit();
        a.test_features_after[0] = "changed".into();
        assert!(matches!(a.verify(), Err(Error::Leakage(_))));
        let mut a = clean_audit();
        a.observed.scaler_moments = "y".into();
        assert!(matches!(a.verify(), Err(Error::Leakage(_))));
        let mut a = clean_audit();
        a.observed.selection_rows = 12;
        assert!(matches!(a.verify(), Err(Error::Leakage(_))));
    }
}
