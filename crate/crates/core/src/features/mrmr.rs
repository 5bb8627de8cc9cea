//! Greedy mRMR feature selection with the MID criterion over three-state
//! discretized features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::FeatureCatalog;
use crate::error::{Error, Result};

/// Discretization thresholds sit at mean ± this many standard deviations.
pub const DISCRETE_HALF_WIDTH: f64 = 0.5;

/// Scores closer than this are tied; ties go to the less redundant feature,
/// then to the lower index.
pub const SCORE_TIE_EPS: f64 = 1e-12;
const STATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Column indices in pick order.
    pub selected: Vec<usize>,
    /// MID criterion value at pick time.
    pub scores: Vec<f64>,
}

impl SelectionResult {
    pub fn names(&self, catalog: &FeatureCatalog) -> Vec<String> {
        self.selected
            .iter()
            .map(|&i| catalog.entries()[i].name.clone())
            .collect()
    }
}

/// Maps one column to states {0, 1, 2} split at mean ± 0.5 std.
pub fn discretize(column: &[f64]) -> Vec<u8> {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let std = (column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let (lo, hi) = (mean - DISCRETE_HALF_WIDTH * std, mean + DISCRETE_HALF_WIDTH * std);
    column
        .iter()
        .map(|&v| {
            if v < lo {
                0
            } else if v > hi {
                2
            } else {
                1
            }
        })
        .collect()
}

/// Mutual information in bits between two discrete sequences with states
/// below 3.
pub fn mutual_information(a: &[u8], b: &[u8]) -> f64 {
    let mut joint = [[0usize; STATES]; STATES];
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize][y as usize] += 1;
    }
    let n = a.len() as f64;
    let pa: Vec<f64> = (0..STATES).map(|i| joint[i].iter().sum::<usize>() as f64 / n).collect();
    let pb: Vec<f64> = (0..STATES)
        .map(|j| (0..STATES).map(|i| joint[i][j]).sum::<usize>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for i in 0..STATES {
        for j in 0..STATES {
            if joint[i][j] > 0 {
                let p = joint[i][j] as f64 / n;
                mi += p * (p / (pa[i] * pb[j])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Selects `k` columns of `rows` among `universe` (all columns when `None`).
pub fn mrmr_select(
    rows: &[Vec<f64>],
    labels: &[u8],
    k: usize,
    universe: Option<&[usize]>,
) -> Result<SelectionResult> {
    if rows.is_empty() {
        return Err(Error::Empty("mRMR training rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Dimension { expected: rows.len(), got: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "{pos} positives among {} rows",
            labels.len()
        )));
    }
    let d = rows[0].len();
    let all: Vec<usize> = (0..d).collect();
    let candidates = universe.unwrap_or(&all);
    if k > candidates.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds {} candidate features",
            candidates.len()
        )));
    }
    if let Some(&bad) = candidates.iter().find(|&&c| c >= d) {
        return Err(Error::Dimension { expected: d, got: bad + 1 });
    }

    let columns: Vec<Vec<u8>> = candidates
        .par_iter()
        .map(|&c| discretize(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let relevance: Vec<f64> = columns.par_iter().map(|col| mutual_information(col, labels)).collect();

    let mut chosen = vec![false; candidates.len()];
    let mut redundancy = vec![0.0; candidates.len()];
    let mut selected = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    for pick in 0..k {
        // (candidate, score, mean redundancy)
        let mut best: Option<(usize, f64, f64)> = None;
        // candidates are visited in index order so strict comparisons keep the lower index on full ties
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by_key(|&j| candidates[j]);
        for j in order {
            if chosen[j] {
                continue;
            }
            let red = if pick == 0 { 0.0 } else { redundancy[j] / pick as f64 };
            let score = relevance[j] - red;
            let better = match best {
                None => true,
                Some((_, s, r)) if (score - s).abs() <= SCORE_TIE_EPS => red < r - SCORE_TIE_EPS,
                Some((_, s, _)) => score > s,
            };
            if better {
                best = Some((j, score, red));
            }
        }
        let (j, score, _) = best.expect("k <= candidate count");
        chosen[j] = true;
        selected.push(candidates[j]);
        scores.push(score);
        if pick + 1 < k {
            let newest = &columns[j];
            redundancy
                .par_iter_mut()
                .zip(&columns)
                .zip(&chosen)
                .for_each(|((r, col), &done)| {
                    if !done {
                        *r += mutual_information(col, newest);
                    }
                });
        }
    }
    Ok(SelectionResult { selected, scores })
}
