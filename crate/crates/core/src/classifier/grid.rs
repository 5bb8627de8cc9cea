//! Exhaustive hyperparameter search over participant-grouped inner splits
//! of the training data.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bagged::{BaggedEnsemble, BaggedParams};
use super::knn::WeightedKnn;
use super::tree::Presorted;
use crate::error::{Error, Result};
use crate::eval::metrics::f1_score;
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridPlan {
    pub num_trees: Vec<usize>,
    pub min_leaf_sizes: Vec<usize>,
    pub knn_k: Vec<usize>,
    pub inner_folds: usize,
    pub features_per_split: Option<usize>,
}

impl Default for GridPlan {
    fn default() -> Self {
        GridPlan {
            num_trees: vec![100, 200, 400],
            min_leaf_sizes: vec![1, 5, 10],
            knn_k: vec![5, 10, 20],
            inner_folds: 3,
            features_per_split: None,
        }
    }
}

impl GridPlan {
    /// A plan with one bagged cell.
    pub fn single(num_trees: usize, min_leaf_size: usize) -> GridPlan {
        GridPlan {
            num_trees: vec![num_trees],
            min_leaf_sizes: vec![min_leaf_size],
            ..GridPlan::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees.is_empty() || self.min_leaf_sizes.is_empty() {
            return Err(Error::Config("bagged grid must have at least one cell".into()));
        }
        if self.num_trees.contains(&0) || self.min_leaf_sizes.contains(&0) || self.knn_k.contains(&0) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if self.inner_folds < 2 {
            return Err(Error::Config("inner_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Training rows with their participant group and whether they are original
/// (not synthetic) windows.
#[derive(Debug, Clone, Copy)]
pub struct GroupedSet<'a> {
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [u8],
    pub groups: &'a [usize],
    pub original: &'a [bool],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell<P> {
    pub params: P,
    pub split_f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome<P> {
    pub best: P,
    /// Empty when the plan has a single cell and no search ran.
    pub cells: Vec<GridCell<P>>,
}

/// Assigns distinct groups to `k` inner folds after a seeded shuffle.
pub fn inner_splits(groups: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut distinct: Vec<usize> = groups.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::TooFewParticipants { got: distinct.len(), k: 2 });
    }
    distinct.shuffle(&mut rng(seed));
    let k = k.min(distinct.len());
    let mut folds = vec![Vec::new(); k];
    for (i, g) in distinct.into_iter().enumerate() {
        folds[i % k].push(g);
    }
    Ok(folds)
}

struct Split {
    train: Vec<usize>,
    val: Vec<usize>,
}

fn make_splits(set: &GroupedSet<'_>, k: usize, seed: u64) -> Result<Vec<Split>> {
    let n = set.rows.len();
    if set.labels.len() != n || set.groups.len() != n || set.original.len() != n {
        return Err(Error::Dimension { expected: n, got: set.labels.len().min(set.groups.len()).min(set.original.len()) });
    }
    Ok(inner_splits(set.groups, k, seed)?
        .into_iter()
        .map(|held| Split {
            train: (0..n).filter(|&i| !held.contains(&set.groups[i])).collect(),
            val: (0..n).filter(|&i| held.contains(&set.groups[i]) && set.original[i]).collect(),
        })
        .collect())
}

fn gather<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Best cell by mean F1; ties go to the earlier cell in `cells`, which the
/// callers order from smallest model to largest.
pub fn pick_best<P: Clone>(cells: &[GridCell<P>]) -> Option<P> {
    let mut best: Option<&GridCell<P>> = None;
    for c in cells {
        if best.is_none_or(|b| c.mean_f1 > b.mean_f1) {
            best = Some(c);
        }
    }
    best.map(|c| c.params.clone())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Searches `num_trees x min_leaf_sizes`; ties prefer fewer trees, then a
/// larger minimum leaf size.
pub fn grid_search_bagged(set: &GroupedSet<'_>, plan: &GridPlan, seed: u64) -> Result<GridOutcome<BaggedParams>> {
    plan.validate()?;
    let mut trees = plan.num_trees.clone();
    trees.sort_unstable();
    trees.dedup();
    let mut leaves = plan.min_leaf_sizes.clone();
    leaves.sort_unstable_by(|a, b| b.cmp(a));
    leaves.dedup();
    let cells_params: Vec<BaggedParams> = trees
        .iter()
        .flat_map(|&t| {
            leaves.iter().map(move |&l| BaggedParams {
                num_trees: t,
                min_leaf_size: l,
                features_per_split: plan.features_per_split,
            })
        })
        .collect();
    if cells_params.len() == 1 {
        let only = cells_params[0];
        return Ok(GridOutcome {
            best: only,
            cells: Vec::new(),
        });
    }
    let splits = make_splits(set, plan.inner_folds, derive_seed(seed, "inner_splits"))?;
    let max_trees = *trees.last().expect("non-empty");
    let mut scores = vec![Vec::new(); cells_params.len()];
    for split in &splits {
        let rows = gather(set.rows, &split.train);
        let labels = gather(set.labels, &split.train);
        let val_rows = gather(set.rows, &split.val);
        let val_labels = gather(set.labels, &split.val);
        let data = Presorted::new(&rows, &labels);
        for &leaf in &leaves {
            let params = BaggedParams { num_trees: max_trees, min_leaf_size: leaf, features_per_split: plan.features_per_split };
            let full = BaggedEnsemble::fit_presorted(&data, params, derive_seed(seed, "grid_trees"));
            for (ci, cp) in cells_params.iter().enumerate() {
                if cp.min_leaf_size != leaf {
                    continue;
                }
                let pred: Vec<u8> = full
                    .truncated(cp.num_trees)
                    .predict_many(&val_rows)?
                    .into_iter()
                    .map(|p| p.0)
                    .collect();
                scores[ci].push(f1_score(&val_labels, &pred));
            }
        }
    }
    let cells: Vec<GridCell<BaggedParams>> = cells_params
        .into_iter()
        .zip(scores)
        .map(|(params, split_f1)| GridCell { params, mean_f1: mean(&split_f1), split_f1 })
        .collect();
    Ok(GridOutcome { best: pick_best(&cells).expect("non-empty grid"), cells })
}

/// Searches `knn_k`; ties prefer smaller k.
pub fn grid_search_knn(set: &GroupedSet<'_>, plan: &GridPlan, seed: u64) -> Result<GridOutcome<usize>> {
    plan.validate()?;
    let mut ks = plan.knn_k.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::Config("knn grid is empty".into()));
    }
    let splits = make_splits(set, plan.inner_folds, derive_seed(seed, "inner_splits"))?;
    let mut scores = vec![Vec::new(); ks.len()];
    for split in &splits {
        let rows = gather(set.rows, &split.train);
        let labels = gather(set.labels, &split.train);
        let val_rows = gather(set.rows, &split.val);
        let val_labels = gather(set.labels, &split.val);
        for (i, &k) in ks.iter().enumerate() {
            let pred: Vec<u8> = WeightedKnn::fit(&rows, &labels, k)?
                .predict_many(&val_rows)?
                .into_iter()
                .map(|p| p.0)
                .collect();
            scores[i].push(f1_score(&val_labels, &pred));
        }
    }
    let cells: Vec<GridCell<usize>> = ks
        .into_iter()
        .zip(scores)
        .map(|(params, split_f1)| GridCell { params, mean_f1: mean(&split_f1), split_f1 })
        .collect();
    Ok(GridOutcome { best: pick_best(&cells).expect("non-empty grid"), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grouped(n_groups: usize, per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>, Vec<usize>) {
        let mut r = rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n_groups {
            for _ in 0..per {
                let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
                labels.push(u8::from(x[0] + 0.2 * r.random_range(-1.0..1.0) > 0.3));
                rows.push(x);
                groups.push(g);
            }
        }
        (rows, labels, groups)
    }

    #[test]
    fn single_cell_returned() {
        let (rows, labels, groups) = grouped(4, 30, 1);
        let original = vec![true; rows.len()];
        let set = GroupedSet { rows: &rows, labels: &labels, groups: &groups, original: &original };
        let out = grid_search_bagged(&set, &GridPlan::single(20, 5), 3).unwrap();
        assert_eq!(out.best, BaggedParams { num_trees: 20, min_leaf_size: 5, features_per_split: None });
        assert!(out.cells.is_empty());
    }

    #[test]
    fn dominating_cell_wins_and_ties_prefer_small() {
        let a = GridCell { params: "A", split_f1: vec![0.5, 0.6], mean_f1: 0.55 };
        let b = GridCell { params: "B", split_f1: vec![0.7, 0.8], mean_f1: 0.75 };
        assert_eq!(pick_best(&[a.clone(), b.clone()]), Some("B"));
        let c = GridCell { params: "C", ..b.clone() };
        assert_eq!(pick_best(&[b, c]), Some("B"));
    }

    #[test]
    fn best_cell_is_argmax_of_reevaluated_objective() {
        let (rows, labels, groups) = grouped(6, 40, 2);
        let original = vec![true; rows.len()];
        let set = GroupedSet { rows: &rows, labels: &labels, groups: &groups, original: &original };
        let plan = GridPlan { num_trees: vec![5, 10], min_leaf_sizes: vec![1, 5], ..GridPlan::default() };
        let out = grid_search_bagged(&set, &plan, 4).unwrap();
        assert_eq!(out.cells.len(), 4);
        // re-run the objective for each cell independently
        let splits = make_splits(&set, 3, derive_seed(4, "inner_splits")).unwrap();
        let mut best = (f64::MIN, None);
        for cell in &out.cells {
            let mut f1s = Vec::new();
            for s in &splits {
                let m = BaggedEnsemble::fit(&gather(&rows, &s.train), &gather(&labels, &s.train), cell.params, derive_seed(4, "grid_trees")).unwrap();
                let pred: Vec<u8> = gather(&rows, &s.val).iter().map(|x| m.predict(x).unwrap().0).collect();
                f1s.push(f1_score(&gather(&labels, &s.val), &pred));
            }
            assert_eq!(f1s, cell.split_f1);
            if mean(&f1s) > best.0 {
                best = (mean(&f1s), Some(cell.params));
            }
        }
        assert_eq!(Some(out.best), best.1);
        assert!(out.cells.iter().all(|c| c.mean_f1 <= best.0));
    }

    #[test]
    fn synthetic_rows_excluded_from_validation() {
        let (rows, labels, groups) = grouped(3, 20, 5);
        let original: Vec<bool> = (0..rows.len()).map(|i| i % 2 == 0).collect();
        let set = GroupedSet { rows: &rows, labels: &labels, groups: &groups, original: &original };
        for s in make_splits(&set, 3, 1).unwrap() {
            assert!(s.val.iter().all(|&i| original[i]));
            assert!(s.train.iter().all(|&i| !s.val.iter().any(|&v| groups[v] == groups[i])));
        }
    }

    #[test]
    fn one_group_is_too_few() {
        assert!(matches!(inner_splits(&[3, 3, 3], 3, 0), Err(Error::TooFewParticipants { .. })));
    }

    #[test]
    fn knn_grid_runs() {
        let (rows, labels, groups) = grouped(3, 20, 6);
        let original = vec![true; rows.len()];
        let set = GroupedSet { rows: &rows, labels: &labels, groups: &groups, original: &original };
        let out = grid_search_knn(&set, &GridPlan::default(), 1).unwrap();
        assert!([5, 10, 20].contains(&out.best));
    }
}
