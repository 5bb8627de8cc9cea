//! Bootstrap-aggregated CART ensemble.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Presorted, TreeParams};
use crate::error::{Error, Result};
use crate::seed::{rng, sub_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaggedParams {
    pub num_trees: usize,
    pub min_leaf_size: usize,
    /// Defaults to floor(sqrt(d)); `Some(d)` gives plain bagging.
    pub features_per_split: Option<usize>,
}

impl Default for BaggedParams {
    fn default() -> Self {
        BaggedParams {
            num_trees: 200,
            min_leaf_size: 5,
            features_per_split: None,
        }
    }
}

impl BaggedParams {
    pub fn resolved_features(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedEnsemble {
    pub trees: Vec<DecisionTree>,
    pub params: BaggedParams,
    pub seed: u64,
    pub dim: usize,
}

fn check_training(rows: &[Vec<f64>], labels: &[u8], min_leaf: usize) -> Result<()> {
    if rows.len() != labels.len() {
        return Err(Error::Dimension { expected: rows.len(), got: labels.len() });
    }
    if rows.len() < 2 * min_leaf.max(1) {
        return Err(Error::TooFewSamples { got: rows.len(), k: 2 * min_leaf.max(1) });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!("{pos} positives among {} rows", labels.len())));
    }
    let d = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: r.len() });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    Ok(())
}

impl BaggedEnsemble {
    pub fn fit(rows: &[Vec<f64>], labels: &[u8], params: BaggedParams, seed: u64) -> Result<BaggedEnsemble> {
        check_training(rows, labels, params.min_leaf_size)?;
        let data = Presorted::new(rows, labels);
        Ok(Self::fit_presorted(&data, params, seed))
    }

    /// Tree `t` depends only on `(data, params, seed, t)`, so an ensemble is
    /// a prefix of any larger ensemble with the same seed.
    pub fn fit_presorted(data: &Presorted, params: BaggedParams, seed: u64) -> BaggedEnsemble {
        let n = data.n_rows();
        let tree_params = TreeParams {
            min_leaf_size: params.min_leaf_size,
            features_per_split: params.resolved_features(data.dim()),
        };
        let trees = (0..params.num_trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng(sub_seed(seed, t as u64));
                let mut weights = vec![0u32; n];
                for _ in 0..n {
                    weights[r.random_range(0..n)] += 1;
                }
                DecisionTree::fit(data, &weights, tree_params, &mut r)
            })
            .collect();
        BaggedEnsemble {
            trees,
            params,
            seed,
            dim: data.dim(),
        }
    }

    /// The first `num_trees` trees.
    pub fn truncated(&self, num_trees: usize) -> BaggedEnsemble {
        BaggedEnsemble {
            trees: self.trees[..num_trees.min(self.trees.len())].to_vec(),
            params: BaggedParams { num_trees, ..self.params },
            seed: self.seed,
            dim: self.dim,
        }
    }

    fn votes(&self, x: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.predict(x) == 1).count()
    }

    /// `(label, score)`; score is the positive vote fraction and a tie at
    /// 0.5 is negative.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        let score = self.votes(x) as f64 / self.trees.len() as f64;
        Ok((u8::from(score > 0.5), score))
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<(u8, f64)>> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::tree::Node;
    use crate::seed::rng;
    use proptest::prelude::{prop_assert_eq, proptest, ProptestConfig};

    fn line_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-1.0..1.0)]).collect();
        let labels = rows.iter().map(|x| u8::from(x[0] > 0.0)).collect();
        (rows, labels)
    }

    #[test]
    fn separable_training_accuracy() {
        let (rows, labels) = line_data(200, 1);
        let params = BaggedParams { num_trees: 25, min_leaf_size: 1, features_per_split: None };
        let m = BaggedEnsemble::fit(&rows, &labels, params, 3).unwrap();
        for (x, &l) in rows.iter().zip(&labels) {
            assert_eq!(m.predict(x).unwrap().0, l);
        }
        let again = BaggedEnsemble::fit(&rows, &labels, params, 3).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn tie_votes_are_negative() {
        let leaf = |c: [u32; 2]| DecisionTree { nodes: vec![Node::Leaf { counts: c }] };
        let mut trees = vec![leaf([0, 3]); 100];
        trees.extend(vec![leaf([3, 0]); 100]);
        let m = BaggedEnsemble { trees, params: BaggedParams::default(), seed: 0, dim: 1 };
        assert_eq!(m.predict(&[0.0]).unwrap(), (0, 0.5));
        let all = BaggedEnsemble { trees: vec![leaf([0, 3]); 200], ..m.clone() };
        assert_eq!(all.predict(&[0.0]).unwrap(), (1, 1.0));
        assert!(matches!(m.predict(&[0.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn held_out_auc() {
        let mut r = rng(12);
        let gen = |r: &mut crate::seed::StageRng, n: usize| -> (Vec<Vec<f64>>, Vec<u8>) {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect();
            let labels = rows.iter().map(|x| u8::from(x[0] + x[1] > 0.2)).collect();
            (rows, labels)
        };
        let (tr, tl) = gen(&mut r, 600);
        let (te, el) = gen(&mut r, 300);
        let m = BaggedEnsemble::fit(&tr, &tl, BaggedParams { num_trees: 50, min_leaf_size: 1, features_per_split: None }, 2).unwrap();
        let scores: Vec<f64> = m.predict_many(&te).unwrap().iter().map(|p| p.1).collect();
        // rank-order AUC: fraction of (pos, neg) pairs ordered correctly, ties half
        let (mut good, mut pairs) = (0.0, 0.0);
        for (i, &li) in el.iter().enumerate() {
            for (j, &lj) in el.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1.0;
                    good += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!(good / pairs >= 0.97, "auc {}", good / pairs);
    }

    #[test]
    fn prefix_property() {
        let (rows, labels) = line_data(120, 4);
        let p = BaggedParams { num_trees: 20, min_leaf_size: 2, features_per_split: None };
        let big = BaggedEnsemble::fit(&rows, &labels, p, 9).unwrap();
        let small = BaggedEnsemble::fit(&rows, &labels, BaggedParams { num_trees: 7, ..p }, 9).unwrap();
        assert_eq!(big.truncated(7), small);
    }

    #[test]
    fn fit_rejects_degenerate_labels() {
        let rows = vec![vec![0.0]; 20];
        assert!(matches!(
            BaggedEnsemble::fit(&rows, &[0; 20], BaggedParams::default(), 1),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(matches!(
            BaggedEnsemble::fit(&rows[..6], &[0, 1, 0, 1, 0, 1], BaggedParams::default(), 1),
            Err(Error::TooFewSamples { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn affine_rescale_keeps_labels(seed in 0u64..1000) {
            let mut r = rng(seed);
            // values on a 1/64 lattice keep 4x + 8 exact in f64
            let rows: Vec<Vec<f64>> = (0..150)
                .map(|_| (0..3).map(|_| r.random_range(-64i32..64) as f64 / 64.0).collect())
                .collect();
            let labels: Vec<u8> = rows.iter().map(|x| u8::from(x[0] * x[1] > 0.1 || x[2] > 0.7)).collect();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|x| x.iter().map(|v| 4.0 * v + 8.0).collect()).collect();
            let p = BaggedParams { num_trees: 10, min_leaf_size: 3, features_per_split: None };
            let a = BaggedEnsemble::fit(&rows, &labels, p, seed).unwrap();
            let b = BaggedEnsemble::fit(&scaled, &labels, p, seed).unwrap();
            for (x, y) in rows.iter().zip(&scaled) {
                prop_assert_eq!(a.predict(x).unwrap(), b.predict(y).unwrap());
            }
            for t in &a.trees {
                for c in t.leaves() {
                    prop_assert_eq!(c[0] + c[1] >= 3, true);
                }
            }
        }
    }
}
