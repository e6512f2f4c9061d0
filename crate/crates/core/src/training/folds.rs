use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stratified k-fold partition of case indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_count: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Test indices of each fold, ascending.
    pub test_folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn test(&self, fold: usize) -> &[usize] {
        &self.test_folds[fold]
    }

    /// Every index not in the test fold, ascending.
    pub fn train(&self, fold: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .test_folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, t)| t.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn case_count(&self) -> usize {
        self.test_folds.iter().map(Vec::len).sum()
    }
}

/// Groups `positions` (indices into `labels`) by class and shuffles each group.
fn shuffled_by_class(labels: &[usize], positions: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let classes = positions.iter().map(|&p| labels[p] + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &p in positions {
        by_class[labels[p]].push(p);
    }
    for members in &mut by_class {
        members.shuffle(rng);
    }
    by_class
}

/// Stratified shuffled partition: cases are grouped by class, shuffled, laid
/// out class after class and dealt round-robin to folds. Each fold then holds
/// ⌊n_c/k⌋ or ⌈n_c/k⌉ cases of class c.
pub fn make_folds(labels: &[usize], fold_count: usize, seed: u64) -> Result<FoldPlan> {
    if fold_count < 2 {
        return Err(Error::Contract(format!("fold_count must be ≥ 2, got {fold_count}")));
    }
    if labels.len() < fold_count {
        return Err(Error::Contract(format!(
            "{} cases cannot fill {fold_count} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..labels.len()).collect();
    let by_class = shuffled_by_class(labels, &all, &mut rng);
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < fold_count {
            log::warn!(
                "class {c} has {} cases for {fold_count} folds; some folds will not test it",
                members.len()
            );
        }
    }
    let mut test_folds = vec![Vec::new(); fold_count];
    for (pos, idx) in by_class.into_iter().flatten().enumerate() {
        test_folds[pos % fold_count].push(idx);
    }
    for f in &mut test_folds {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        fold_count,
        seed,
        stratified: true,
        test_folds,
    })
}

/// Splits `positions` into (train, validation), taking `round(fraction·n_c)`
/// of each class for validation while leaving at least one case per class in
/// training. Both outputs are ascending.
pub fn stratified_split(
    labels: &[usize],
    positions: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for members in shuffled_by_class(labels, positions, &mut rng) {
        let n = members.len();
        let take = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_cases_ten_folds() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let plan = make_folds(&labels, 10, 4).unwrap();
        let mut seen: Vec<usize> = plan.test_folds.iter().flatten().copied().collect();
        assert!(plan.test_folds.iter().all(|f| f.len() == 10));
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        assert_eq!(plan, make_folds(&labels, 10, 4).unwrap());
        assert_ne!(plan, make_folds(&labels, 10, 5).unwrap());
        assert_eq!(plan.train(0).len(), 90);
    }

    #[test]
    fn class_counts_per_fold_within_one() {
        let labels: Vec<usize> = (0..537).map(|i| (i * 7 + i / 13) % 5).collect();
        let plan = make_folds(&labels, 10, 1).unwrap();
        for c in 0..5 {
            let n_c = labels.iter().filter(|&&l| l == c).count() as f64;
            for f in &plan.test_folds {
                let k = f.iter().filter(|&&i| labels[i] == c).count() as f64;
                assert!((k - n_c / 10.0).abs() < 1.0, "class {c}: {k} vs {}", n_c / 10.0);
            }
        }
    }

    #[test]
    fn rare_class_is_allowed() {
        let mut labels = vec![0; 50];
        labels[3] = 1;
        let plan = make_folds(&labels, 10, 0).unwrap();
        assert_eq!(plan.case_count(), 50);
    }

    #[test]
    fn validation_split_is_stratified() {
        let labels: Vec<usize> = (0..200).map(|i| usize::from(i % 4 == 0)).collect();
        let positions: Vec<usize> = (0..200).collect();
        let (train, val) = stratified_split(&labels, &positions, 0.1, 3);
        assert_eq!(val.len(), 20);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 1).count(), 5);
        assert_eq!(train.len() + val.len(), 200);
        // A singleton class stays in training.
        let (t, v) = stratified_split(&[0, 0, 1], &[0, 1, 2], 0.9, 0);
        assert!(t.contains(&2) && !v.contains(&2));
    }
}
