//! Training, persistence, detection and cross-validation on a small
//! synthetic corpus.

use std::sync::OnceLock;

use sist_core::config::PipelineConfig;
use sist_core::eval::cv::{run_cv_with, CvHooks};
use sist_core::eval::report::{read_metrics, write_report, CLASSIFICATION_FILE};
use sist_core::eval::{run_cv, CvReport, WITHOUT_LOAD, WITH_LOAD};
use sist_core::model::SessionRecording;
use sist_core::pipeline::{train_detector, ModelFile, TrainedDetector};
use sist_core::synth::generate_corpus;
use sist_core::Error;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.simulate.n_participants = 4;
    cfg.folds = 2;
    cfg.grid.num_trees = vec![40];
    cfg
}

fn corpus() -> &'static [SessionRecording] {
    static CORPUS: OnceLock<Vec<SessionRecording>> = OnceLock::new();
    CORPUS.get_or_init(|| generate_corpus(&small_config().simulate).unwrap().into_iter().map(|s| s.recording).collect())
}

fn cv_report() -> &'static CvReport {
    static REPORT: OnceLock<CvReport> = OnceLock::new();
    REPORT.get_or_init(|| run_cv(corpus(), &small_config()).unwrap())
}

fn trained() -> &'static TrainedDetector {
    static MODEL: OnceLock<TrainedDetector> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = small_config();
        train_detector(&corpus()[..3], &cfg.window_specs().unwrap()[0], &cfg).unwrap().detector
    })
}

#[test]
fn model_roundtrip_preserves_predictions() {
    let det = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    det.save(&path).unwrap();
    let back = TrainedDetector::load(&path).unwrap();
    // node storage order may differ; the serialized trees must not
    assert_eq!(back.to_file(), det.to_file());
    let held_out = &corpus()[3];
    assert_eq!(back.detect(held_out).unwrap(), det.detect(held_out).unwrap());
}

#[test]
fn tampered_model_is_refused() {
    let det = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");

    let mut file = det.to_file();
    file.valley_margin_s += 0.1;
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    assert!(matches!(TrainedDetector::load(&path), Err(Error::Checksum(_))));

    let mut file: ModelFile = det.to_file();
    file.catalog_checksum = "0".repeat(64);
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    let err = TrainedDetector::load(&path).unwrap_err();
    assert!(matches!(err, Error::Checksum(ref m) if m.contains("catalog")), "{err}");
}

#[test]
fn held_out_detections_overlap_truth() {
    let rec = &corpus()[3];
    let d = trained().detect(rec).unwrap();
    assert_eq!(d.raw.len(), d.smoothed.len());
    let fs = rec.sample_rate;
    let hits = rec
        .annotations
        .sist
        .iter()
        .filter(|t| d.segment_intervals(fs).iter().any(|s| s.intersection(t) >= 0.5 * t.duration()))
        .count();
    assert!(hits * 2 >= rec.annotations.sist.len(), "{hits} of {} transitions found", rec.annotations.sist.len());
    for s in &d.segments {
        let m = s.measured.unwrap();
        assert!(m.valley1_idx <= m.peak_idx && m.peak_idx <= m.valley2_idx);
    }
}

#[test]
fn cv_report_structure() {
    let r = cv_report();
    assert_eq!(r.specs.len(), 1);
    let spec = &r.specs[0];
    let names: Vec<&str> = spec.variants.iter().map(|v| v.variant.as_str()).collect();
    assert_eq!(names, [WITH_LOAD, WITHOUT_LOAD]);
    for v in &spec.variants {
        assert_eq!(v.folds.len(), 2);
        let mut windows = 0;
        for f in &v.folds {
            let c = f.window_counts;
            windows += c.total();
            // accuracy times total reproduces tp + tn
            assert!((f.window.accuracy * c.total() as f64 - (c.tp + c.tn) as f64).abs() < 1e-9);
            assert_eq!(f.train_counts.positives(), f.train_counts.original_neg);
            if let (Some(a), Some(b)) = (f.duration_tp, f.duration_all) {
                assert!(a.rmse_s >= a.mae_s && b.rmse_s >= b.mae_s);
            }
            f.audit.verify().unwrap();
        }
        assert_eq!(windows, spec.windows);
    }
    let with = spec.variant(WITH_LOAD).unwrap();
    let without = spec.variant(WITHOUT_LOAD).unwrap();
    for (a, b) in with.folds.iter().zip(&without.folds) {
        // ablation changes only the selection universe
        assert_eq!(a.train_counts, b.train_counts);
        assert_eq!(a.window_counts.tp + a.window_counts.fn_, b.window_counts.tp + b.window_counts.fn_);
        assert!(b.selected_features.iter().all(|n| !n.contains("load")));
    }
}

#[test]
fn cv_is_deterministic_and_report_roundtrips() {
    let again = run_cv(corpus(), &small_config()).unwrap();
    assert_eq!(&again, cv_report());
    let dir = tempfile::tempdir().unwrap();
    write_report(cv_report(), dir.path()).unwrap();
    let back = read_metrics(&dir.path().join("metrics.json")).unwrap();
    assert_eq!(&back, cv_report());
    let classification = std::fs::read_to_string(dir.path().join(CLASSIFICATION_FILE)).unwrap();
    assert_eq!(classification.lines().count(), 2);
}

#[test]
fn selection_leak_is_caught() {
    let mut cfg = small_config();
    cfg.ablation = false;
    let err = run_cv_with(corpus(), &cfg, CvHooks { fit_selection_on_all_rows: true }).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");
}
