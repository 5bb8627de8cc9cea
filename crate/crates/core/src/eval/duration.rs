//! Segment-to-event matching and duration error regimes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Interval;

/// A predicted segment is a true positive when it covers at least this
/// fraction of a ground-truth interval.
pub const TP_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub predicted: usize,
    /// Matched truth interval; for false positives the best-overlapping
    /// interval, if any.
    pub truth: Option<usize>,
    /// |intersection| / |truth|.
    pub overlap: f64,
    /// |intersection| / |union|.
    pub iou: f64,
    pub is_tp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub matches: Vec<SegmentMatch>,
    /// Truth intervals that no predicted segment matched.
    pub missed: Vec<usize>,
}

impl MatchTable {
    pub fn tp_count(&self) -> usize {
        self.matches.iter().filter(|m| m.is_tp).count()
    }

    pub fn fp_count(&self) -> usize {
        self.matches.len() - self.tp_count()
    }
}

fn overlap_of(p: &Interval, t: &Interval) -> (f64, f64) {
    let inter = p.intersection(t);
    let union = p.duration() + t.duration() - inter;
    let frac = if t.duration() > 0.0 { inter / t.duration() } else { 0.0 };
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    (frac, iou)
}

/// Greedy one-to-one matching by descending overlap fraction; only pairs
/// reaching `TP_OVERLAP` can match.
pub fn match_segments(predicted: &[Interval], truth: &[Interval]) -> MatchTable {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in predicted.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            let (frac, _) = overlap_of(p, t);
            if frac >= TP_OVERLAP {
                pairs.push((frac, pi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_to: Vec<Option<usize>> = vec![None; predicted.len()];
    let mut truth_used = vec![false; truth.len()];
    for (_, pi, ti) in pairs {
        if pred_to[pi].is_none() && !truth_used[ti] {
            pred_to[pi] = Some(ti);
            truth_used[ti] = true;
        }
    }
    let matches = predicted
        .iter()
        .enumerate()
        .map(|(pi, p)| {
            if let Some(ti) = pred_to[pi] {
                let (overlap, iou) = overlap_of(p, &truth[ti]);
                SegmentMatch { predicted: pi, truth: Some(ti), overlap, iou, is_tp: true }
            } else {
                let best = truth
                    .iter()
                    .enumerate()
                    .map(|(ti, t)| (ti, overlap_of(p, t)))
                    .filter(|(_, (f, _))| *f > 0.0)
                    .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(&a.0)));
                match best {
                    Some((ti, (overlap, iou))) => SegmentMatch { predicted: pi, truth: Some(ti), overlap, iou, is_tp: false },
                    None => SegmentMatch { predicted: pi, truth: None, overlap: 0.0, iou: 0.0, is_tp: false },
                }
            }
        })
        .collect();
    let missed = (0..truth.len()).filter(|&t| !truth_used[t]).collect();
    MatchTable { matches, missed }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeErrors {
    pub mae_s: f64,
    pub rmse_s: f64,
    pub n: usize,
}

impl RegimeErrors {
    pub fn from_errors(errors: &[f64]) -> Result<RegimeErrors> {
        if errors.is_empty() {
            return Err(Error::Empty("duration error regime".into()));
        }
        let n = errors.len() as f64;
        Ok(RegimeErrors {
            mae_s: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
            rmse_s: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            n: errors.len(),
        })
    }
}

/// Absolute errors for the two regimes: TP segments only, and TP segments
/// plus each FP segment's measured duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationErrors {
    pub tp_errors: Vec<f64>,
    pub fp_penalties: Vec<f64>,
    pub missed: usize,
}

impl DurationErrors {
    pub fn all_detections(&self) -> Vec<f64> {
        self.tp_errors.iter().chain(&self.fp_penalties).copied().collect()
    }

    pub fn tp_only(&self) -> Result<RegimeErrors> {
        RegimeErrors::from_errors(&self.tp_errors)
    }

    pub fn all(&self) -> Result<RegimeErrors> {
        RegimeErrors::from_errors(&self.all_detections())
    }

    pub fn extend(&mut self, other: &DurationErrors) {
        self.tp_errors.extend_from_slice(&other.tp_errors);
        self.fp_penalties.extend_from_slice(&other.fp_penalties);
        self.missed += other.missed;
    }
}

/// `measured[i]` belongs to predicted segment `i`, `truth[j]` to truth
/// interval `j`.
pub fn duration_errors(table: &MatchTable, measured: &[f64], truth: &[f64]) -> Result<DurationErrors> {
    let mut out = DurationErrors { tp_errors: Vec::new(), fp_penalties: Vec::new(), missed: table.missed.len() };
    for m in &table.matches {
        let est = *measured.get(m.predicted).ok_or_else(|| Error::Shape(format!("no measurement for segment {}", m.predicted)))?;
        if m.is_tp {
            let ti = m.truth.expect("TP has a truth interval");
            let t = *truth.get(ti).ok_or_else(|| Error::Shape(format!("no truth duration for interval {ti}")))?;
            out.tp_errors.push((est - t).abs());
        } else {
            out.fp_penalties.push(est);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_is_tp() {
        let t = match_segments(&[Interval::new(1.0, 2.0)], &[Interval::new(1.0, 2.0)]);
        assert_eq!(t.matches[0].overlap, 1.0);
        assert!(t.matches[0].is_tp);
        assert!(t.missed.is_empty());
    }

    #[test]
    fn forty_percent_is_fp() {
        let t = match_segments(&[Interval::new(0.0, 1.4)], &[Interval::new(1.0, 2.0)]);
        assert!(!t.matches[0].is_tp);
        assert!((t.matches[0].overlap - 0.4).abs() < 1e-12);
        assert_eq!(t.missed, vec![0]);
    }

    /// Enumerates every one-to-one assignment of predictions to truths
    /// (or none) and keeps the one with the most TPs, then largest overlap sum.
    fn oracle(pred: &[Interval], truth: &[Interval]) -> Vec<Option<usize>> {
        fn rec(i: usize, pred: &[Interval], truth: &[Interval], used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, best: &mut (usize, f64, Vec<Option<usize>>)) {
            if i == pred.len() {
                let tps = cur.iter().filter(|c| c.is_some()).count();
                let sum: f64 = cur.iter().enumerate().filter_map(|(p, c)| c.map(|t| overlap_of(&pred[p], &truth[t]).0)).sum();
                if tps > best.0 || (tps == best.0 && sum > best.1 + 1e-12) {
                    *best = (tps, sum, cur.clone());
                }
                return;
            }
            cur.push(None);
            rec(i + 1, pred, truth, used, cur, best);
            cur.pop();
            for t in 0..truth.len() {
                if !used[t] && overlap_of(&pred[i], &truth[t]).0 >= TP_OVERLAP {
                    used[t] = true;
                    cur.push(Some(t));
                    rec(i + 1, pred, truth, used, cur, best);
                    cur.pop();
                    used[t] = false;
                }
            }
        }
        let mut best = (0, f64::MIN, vec![None; pred.len()]);
        rec(0, pred, truth, &mut vec![false; truth.len()], &mut Vec::new(), &mut best);
        best.2
    }

    #[test]
    fn two_predictions_one_truth() {
        // overlaps 0.9 and 0.6 of a 1 s truth interval
        let truth = [Interval::new(10.0, 11.0)];
        let pred = [Interval::new(9.5, 10.9), Interval::new(10.4, 11.5)];
        let t = match_segments(&pred, &truth);
        assert!(t.matches[0].is_tp && !t.matches[1].is_tp);
        assert!((t.matches[0].overlap - 0.9).abs() < 1e-12);
        let o = oracle(&pred, &truth);
        assert_eq!(o, vec![Some(0), None]);
    }

    proptest! {
        #[test]
        fn greedy_agrees_with_assignment_oracle_on_disjoint_truths(
            starts in prop::collection::vec((0.0f64..1.0, 0.5f64..2.0), 1..4),
            preds in prop::collection::vec((0.0f64..12.0, 0.2f64..3.0), 0..5),
        ) {
            // truths are spaced so no prediction under 3 s can reach half of two of them
            let truth: Vec<Interval> = starts.iter().enumerate().map(|(i, (o, d))| Interval::new(i as f64 * 4.0 + o, i as f64 * 4.0 + o + d)).collect();
            let pred: Vec<Interval> = preds.iter().map(|(s, d)| Interval::new(*s, s + d)).collect();
            let table = match_segments(&pred, &truth);
            let o = oracle(&pred, &truth);
            let tps = o.iter().filter(|x| x.is_some()).count();
            prop_assert_eq!(table.tp_count(), tps);
            prop_assert_eq!(table.tp_count() + table.missed.len(), truth.len());
        }
    }

    #[test]
    fn regime_examples() {
        let one = RegimeErrors::from_errors(&[(1.50f64 - 1.55).abs()]).unwrap();
        assert!((one.mae_s - 0.05).abs() < 1e-12 && (one.rmse_s - 0.05).abs() < 1e-12);
        let d = DurationErrors { tp_errors: vec![0.1], fp_penalties: vec![0.6], missed: 0 };
        assert!((d.tp_only().unwrap().mae_s - 0.1).abs() < 1e-12);
        let all = d.all().unwrap();
        assert!((all.mae_s - 0.35).abs() < 1e-12);
        assert!((all.rmse_s - ((0.01f64 + 0.36) / 2.0).sqrt()).abs() < 1e-12);
        let perfect = DurationErrors { tp_errors: vec![0.0, 0.0], fp_penalties: vec![], missed: 0 };
        assert_eq!(perfect.all().unwrap().mae_s, 0.0);
        assert!(matches!(RegimeErrors::from_errors(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn errors_from_table() {
        let truth = [Interval::new(1.0, 2.5), Interval::new(5.0, 6.0)];
        let pred = [Interval::new(1.0, 2.4), Interval::new(8.0, 9.0)];
        let table = match_segments(&pred, &truth);
        let d = duration_errors(&table, &[1.45, 0.7], &[1.5, 1.0]).unwrap();
        assert!((d.tp_errors[0] - 0.05).abs() < 1e-12);
        assert_eq!(d.fp_penalties, vec![0.7]);
        assert_eq!(d.missed, 1);
    }
}
