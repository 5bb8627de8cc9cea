//! Participant-level fold assignment.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn fold_of(&self, participant: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|p| p == participant))
    }
}

/// Shuffles the distinct participants with `seed` and deals them round-robin
/// into `k` folds. Participants inside a fold are sorted.
pub fn make_folds(participants: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut ids: Vec<String> = participants.to_vec();
    ids.sort();
    ids.dedup();
    if k == 0 || ids.len() < k {
        return Err(Error::TooFewParticipants { got: ids.len(), k });
    }
    ids.shuffle(&mut rng(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, p) in ids.into_iter().enumerate() {
        folds[i % k].push(p);
    }
    folds.iter_mut().for_each(|f| f.sort());
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("P{i:02}")).collect()
    }

    #[test]
    fn sixteen_into_four() {
        let plan = make_folds(&ids(16), 4, 7).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 4));
        let mut all: Vec<String> = plan.folds.concat();
        all.sort();
        assert_eq!(all, ids(16));
        assert_eq!(plan, make_folds(&ids(16), 4, 7).unwrap());
    }

    #[test]
    fn uneven_sizes() {
        let plan = make_folds(&ids(5), 4, 1).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 1, 2]);
        assert!(matches!(make_folds(&ids(3), 4, 1), Err(Error::TooFewParticipants { got: 3, k: 4 })));
    }
}
