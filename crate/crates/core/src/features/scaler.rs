//! Column standardization fitted on training rows only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CONSTANT_STD_EPS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    /// Population standard deviations; constant columns store 1.
    pub stds: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Empty("scaler training rows".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension { expected: d, got: r.len() });
            }
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars
            .into_iter()
            .zip(&means)
            .map(|(v, m)| {
                let s = (v / n).sqrt();
                if s <= CONSTANT_STD_EPS * m.abs().max(1.0) {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        if means.iter().any(|m: &f64| !m.is_finite()) {
            return Err(Error::NonFinite("scaler moments".into()));
        }
        Ok(StandardScaler { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: row.len() });
        }
        Ok(row
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }

    /// Restricts the scaler to a subset of columns.
    pub fn select(&self, columns: &[usize]) -> StandardScaler {
        StandardScaler {
            means: columns.iter().map(|&c| self.means[c]).collect(),
            stds: columns.iter().map(|&c| self.stds[c]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = StandardScaler::fit(&rows).unwrap();
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.stds, vec![1.0, 1.0]);
        assert_eq!(s.transform(&rows).unwrap(), vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(s.select(&[1]).means, vec![5.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(StandardScaler::fit(&[]), Err(Error::Empty(_))));
        assert!(matches!(
            StandardScaler::fit(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::Dimension { .. })
        ));
        let s = StandardScaler::fit(&[vec![1.0]]).unwrap();
        assert!(matches!(s.transform_row(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }
}
