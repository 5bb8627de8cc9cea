//! Distance-weighted k-nearest-neighbor baseline.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const KNN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedKnn {
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    pub k: usize,
}

impl WeightedKnn {
    pub fn fit(rows: &[Vec<f64>], labels: &[u8], k: usize) -> Result<WeightedKnn> {
        if k == 0 {
            return Err(Error::Config("knn k must be at least 1".into()));
        }
        if rows.is_empty() {
            return Err(Error::Empty("knn training rows".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension { expected: rows.len(), got: labels.len() });
        }
        Ok(WeightedKnn {
            rows: rows.to_vec(),
            labels: labels.to_vec(),
            k,
        })
    }

    /// `(label, score)`; score is the inverse-distance weight mass of
    /// positive neighbors and a tie at 0.5 is negative.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        let d = self.rows[0].len();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
            .collect();
        let k = self.k.min(dist.len());
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (mut pos, mut total) = (0.0, 0.0);
        for &(dd, i) in &dist[..k] {
            let w = 1.0 / (dd + KNN_EPS);
            total += w;
            if self.labels[i] == 1 {
                pos += w;
            }
        }
        let score = pos / total;
        Ok((u8::from(score > 0.5), score))
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<(u8, f64)>> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }
}
