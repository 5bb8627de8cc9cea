//! CART classification tree with Gini impurity, grown on bootstrap weights
//! over presorted feature columns.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::StageRng;

/// A split must lower the weighted Gini sum by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Weighted training rows per class.
        counts: [u32; 2],
    },
}

impl Node {
    pub fn leaf_prediction(counts: [u32; 2]) -> u8 {
        u8::from(counts[1] > counts[0])
    }
}

/// Nested form of a tree used for JSON persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeRecord {
    Split {
        feature_idx: usize,
        threshold: f64,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        class_counts: [u32; 2],
        prediction: u8,
        probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Arena; node 0 is the root.
    pub nodes: Vec<Node>,
}

/// Column-major training data with each column's row order sorted by value.
#[derive(Debug)]
pub struct Presorted {
    pub cols: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(rows: &[Vec<f64>], labels: &[u8]) -> Presorted {
        let d = rows.first().map_or(0, Vec::len);
        let cols: Vec<Vec<f64>> = (0..d).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted {
            cols,
            labels: labels.to_vec(),
            order,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub min_leaf_size: usize,
    pub features_per_split: usize,
}

struct Best {
    feature: usize,
    pos: usize,
    threshold: f64,
    score: f64,
}

fn gini_score(c0: f64, c1: f64) -> f64 {
    // larger is purer: sum of squared counts over node weight
    (c0 * c0 + c1 * c1) / (c0 + c1)
}

impl DecisionTree {
    /// Grows a tree on rows with positive `weights` (bootstrap multiplicities).
    pub fn fit(data: &Presorted, weights: &[u32], params: TreeParams, rng: &mut StageRng) -> DecisionTree {
        let d = data.dim();
        let mut orders: Vec<Vec<u32>> = data
            .order
            .iter()
            .map(|o| o.iter().copied().filter(|&r| weights[r as usize] > 0).collect())
            .collect();
        let m = orders.first().map_or(0, Vec::len);
        let min_leaf = params.min_leaf_size.max(1) as f64;
        let k = params.features_per_split.clamp(1, d.max(1));
        let mut goes_left = vec![false; data.n_rows()];
        let mut scratch: Vec<u32> = Vec::with_capacity(m);
        let mut features: Vec<usize> = (0..d).collect();

        let mut nodes = vec![Node::Leaf { counts: [0, 0] }];
        let mut stack = vec![(0usize, 0usize, m)];
        while let Some((id, lo, hi)) = stack.pop() {
            let mut counts = [0u32; 2];
            if d > 0 {
                for &r in &orders[0][lo..hi] {
                    counts[data.labels[r as usize] as usize] += weights[r as usize];
                }
            }
            let (c0, c1) = (counts[0] as f64, counts[1] as f64);
            let total = c0 + c1;
            if d == 0 || c0 == 0.0 || c1 == 0.0 || total < 2.0 * min_leaf {
                nodes[id] = Node::Leaf { counts };
                continue;
            }
            let parent = gini_score(c0, c1);
            // partial Fisher-Yates draws k distinct features
            for i in 0..k {
                let j = rng.random_range(i..d);
                features.swap(i, j);
            }
            let mut best: Option<Best> = None;
            for &f in &features[..k] {
                let col = &data.cols[f];
                let ord = &orders[f][lo..hi];
                let (mut l0, mut l1) = (0.0, 0.0);
                for i in 0..ord.len() - 1 {
                    let r = ord[i] as usize;
                    let w = weights[r] as f64;
                    if data.labels[r] == 1 {
                        l1 += w;
                    } else {
                        l0 += w;
                    }
                    let (a, b) = (col[r], col[ord[i + 1] as usize]);
                    if a == b {
                        continue;
                    }
                    let lw = l0 + l1;
                    if lw < min_leaf || total - lw < min_leaf {
                        continue;
                    }
                    let score = gini_score(l0, l1) + gini_score(c0 - l0, c1 - l1);
                    if score > parent + MIN_GAIN && best.as_ref().is_none_or(|b| score > b.score) {
                        let mut threshold = a + (b - a) / 2.0;
                        if threshold >= b {
                            threshold = a;
                        }
                        best = Some(Best {
                            feature: f,
                            pos: i + 1,
                            threshold,
                            score,
                        });
                    }
                }
            }
            let Some(best) = best else {
                nodes[id] = Node::Leaf { counts };
                continue;
            };
            let mid = lo + best.pos;
            for (i, &r) in orders[best.feature][lo..hi].iter().enumerate() {
                goes_left[r as usize] = i < best.pos;
            }
            for (f, ord) in orders.iter_mut().enumerate() {
                if f == best.feature {
                    continue;
                }
                scratch.clear();
                let span = &mut ord[lo..hi];
                let mut w = 0;
                for i in 0..span.len() {
                    let r = span[i];
                    if goes_left[r as usize] {
                        span[w] = r;
                        w += 1;
                    } else {
                        scratch.push(r);
                    }
                }
                span[w..].copy_from_slice(&scratch);
            }
            let left = nodes.len();
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, mid, hi));
            stack.push((left, lo, mid));
        }
        DecisionTree { nodes }
    }

    fn leaf_for(&self, x: &[f64]) -> [u32; 2] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        Node::leaf_prediction(self.leaf_for(x))
    }

    pub fn leaves(&self) -> impl Iterator<Item = [u32; 2]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts } => Some(*counts),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, id: usize) -> usize {
            match &t.nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn to_record(&self) -> NodeRecord {
        fn go(t: &DecisionTree, id: usize) -> NodeRecord {
            match &t.nodes[id] {
                Node::Leaf { counts } => NodeRecord::Leaf {
                    class_counts: *counts,
                    prediction: Node::leaf_prediction(*counts),
                    probability: counts[1] as f64 / (counts[0] + counts[1]).max(1) as f64,
                },
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeRecord::Split {
                    feature_idx: *feature,
                    threshold: *threshold,
                    left: Box::new(go(t, *left)),
                    right: Box::new(go(t, *right)),
                },
            }
        }
        go(self, 0)
    }

    pub fn from_record(rec: &NodeRecord) -> DecisionTree {
        fn go(rec: &NodeRecord, nodes: &mut Vec<Node>) -> usize {
            let id = nodes.len();
            nodes.push(Node::Leaf { counts: [0, 0] });
            match rec {
                NodeRecord::Leaf { class_counts, .. } => {
                    nodes[id] = Node::Leaf { counts: *class_counts };
                }
                NodeRecord::Split {
                    feature_idx,
                    threshold,
                    left,
                    right,
                } => {
                    let l = go(left, nodes);
                    let r = go(right, nodes);
                    nodes[id] = Node::Split {
                        feature: *feature_idx,
                        threshold: *threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            id
        }
        let mut nodes = Vec::new();
        go(rec, &mut nodes);
        DecisionTree { nodes }
    }

    /// Largest feature index referenced by a split.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    fn fit_all(rows: &[Vec<f64>], labels: &[u8], min_leaf: usize) -> DecisionTree {
        let data = Presorted::new(rows, labels);
        let params = TreeParams {
            min_leaf_size: min_leaf,
            features_per_split: rows[0].len(),
        };
        DecisionTree::fit(&data, &vec![1; rows.len()], params, &mut rng(0))
    }

    #[test]
    fn separable_threshold_is_midpoint() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..10).map(|i| u8::from(i >= 6)).collect();
        let t = fit_all(&rows, &labels, 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 5.5,
                left: 1,
                right: 2
            }
        );
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict(r), l);
        }
    }

    #[test]
    fn xor_matches_hand_built_tree() {
        // oracle: split x at 0, then y at 0 on each side
        let oracle = |x: &[f64]| u8::from((x[0] > 0.0) != (x[1] > 0.0));
        let mut r = rng(5);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|x| oracle(x)).collect();
        let t = fit_all(&rows, &labels, 1);
        let correct = rows.iter().filter(|x| t.predict(x) == oracle(x)).count();
        assert!(correct as f64 / 400.0 >= 0.95);
    }

    #[test]
    fn leaves_respect_min_size_and_weights() {
        let mut r = rng(8);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| r.random_range(0.0..1.0)).collect())
            .collect();
        let labels: Vec<u8> = rows.iter().map(|x| u8::from(x[0] + 0.3 * x[1] > 0.6)).collect();
        let data = Presorted::new(&rows, &labels);
        let weights: Vec<u32> = (0..300).map(|_| r.random_range(0..3)).collect();
        let params = TreeParams {
            min_leaf_size: 5,
            features_per_split: 1,
        };
        let t = DecisionTree::fit(&data, &weights, params, &mut rng(1));
        let total: u32 = t.leaves().map(|c| c[0] + c[1]).sum();
        assert_eq!(total, weights.iter().sum::<u32>());
        assert!(t.leaves().all(|c| c[0] + c[1] >= 5));
    }

    #[test]
    fn record_roundtrip() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i / 7) as f64]).collect();
        let labels: Vec<u8> = rows.iter().map(|x| u8::from(x[0] > 3.0 && x[1] < 4.0)).collect();
        let t = fit_all(&rows, &labels, 1);
        assert_eq!(DecisionTree::from_record(&t.to_record()), t);
    }
}
