//! Seeded train/validation splitting.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::math::DetRng;

/// How to split labeled data for probe training. The 4:1 default matches
/// the probing protocol.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    /// Fraction of items on the training side, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
    /// When set, all items sharing a question id land on the same side.
    pub stratify_by_question: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            stratify_by_question: false,
        }
    }
}

/// Split indices `0..n` into (train, val) by seeded shuffle. `group_of`
/// maps an index to its question id for stratified splits.
pub fn split_indices(
    n: usize,
    spec: &SplitSpec,
    group_of: impl Fn(usize) -> usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArg(format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = DetRng::new(spec.seed);

    let (train, val) = if spec.stratify_by_question {
        let groups: BTreeSet<usize> = (0..n).map(&group_of).collect();
        let mut group_list: Vec<usize> = groups.into_iter().collect();
        rng.shuffle(&mut group_list);
        let n_train_groups = ((group_list.len() as f64) * spec.train_fraction).floor() as usize;
        let train_groups: BTreeSet<usize> =
            group_list.iter().take(n_train_groups).copied().collect();
        let mut train = Vec::new();
        let mut val = Vec::new();
        for i in 0..n {
            if train_groups.contains(&group_of(i)) {
                train.push(i);
            } else {
                val.push(i);
            }
        }
        (train, val)
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let n_train = ((n as f64) * spec.train_fraction).floor() as usize;
        let mut train: Vec<usize> = order[..n_train].to_vec();
        let mut val: Vec<usize> = order[n_train..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        (train, val)
    };

    if train.is_empty() || val.is_empty() {
        return Err(Error::Degenerate(format!(
            "split of {n} items at fraction {} leaves one side empty",
            spec.train_fraction
        )));
    }
    Ok((train, val))
}

/// Sample `target` indices from `pool` with replacement, seeded. Used to
/// equalize per-cluster training counts in the few-shot setting.
pub fn upsample_with_replacement(pool: &[usize], target: usize, rng: &mut DetRng) -> Vec<usize> {
    assert!(!pool.is_empty());
    (0..target).map(|_| pool[rng.range(pool.len())]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_to_one_split_of_ten() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 3,
            stratify_by_question: false,
        };
        let (train, val) = split_indices(10, &spec, |i| i).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(val.len(), 2);
    }

    #[test]
    fn same_seed_same_split_different_seed_differs() {
        let spec = |seed| SplitSpec {
            train_fraction: 0.8,
            seed,
            stratify_by_question: false,
        };
        let a = split_indices(50, &spec(1), |i| i).unwrap();
        let b = split_indices(50, &spec(1), |i| i).unwrap();
        assert_eq!(a, b);
        let c = split_indices(50, &spec(2), |i| i).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stratified_split_never_splits_a_question() {
        // 30 items in 10 groups of 3.
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 9,
            stratify_by_question: true,
        };
        let group_of = |i: usize| i / 3;
        let (train, val) = split_indices(30, &spec, group_of).unwrap();
        let train_groups: BTreeSet<usize> = train.iter().map(|&i| group_of(i)).collect();
        let val_groups: BTreeSet<usize> = val.iter().map(|&i| group_of(i)).collect();
        assert!(train_groups.is_disjoint(&val_groups));
        assert_eq!(train.len() + val.len(), 30);
    }

    #[test]
    fn degenerate_sizes_error() {
        let spec = SplitSpec {
            train_fraction: 0.5,
            seed: 0,
            stratify_by_question: false,
        };
        assert!(split_indices(1, &spec, |i| i).is_err());
        let tiny = SplitSpec {
            train_fraction: 0.01,
            seed: 0,
            stratify_by_question: false,
        };
        assert!(split_indices(3, &tiny, |i| i).is_err());
    }

    #[test]
    fn upsample_hits_target_len_and_pool_members() {
        let mut rng = DetRng::new(4);
        let pool = vec![2, 5, 7];
        let out = upsample_with_replacement(&pool, 10, &mut rng);
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|x| pool.contains(x)));
    }
}
