//! Bagged CART ensemble (primary model), weighted KNN (baseline) and grid
//! search.

pub mod bagged;
pub mod grid;
pub mod knn;
pub mod tree;

pub use bagged::{BaggedEnsemble, BaggedParams};
pub use grid::{grid_search_bagged, grid_search_knn, GridOutcome, GridPlan, GroupedSet};
pub use knn::WeightedKnn;
pub use tree::{DecisionTree, NodeRecord};
