//! Seeded k-fold and holdout partitions over sample indices.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Indices into the dataset; train order is the shuffled order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Splits `0..n` into `k` test folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::config(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::Input(format!("{n} samples cannot fill {k} folds")));
    }
    let order = shuffled(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut bounds = vec![0];
    for i in 0..k {
        bounds.push(bounds[i] + base + usize::from(i < extra));
    }
    Ok((0..k)
        .map(|i| {
            let (lo, hi) = (bounds[i], bounds[i + 1]);
            Fold {
                test: order[lo..hi].to_vec(),
                train: order[..lo].iter().chain(&order[hi..]).copied().collect(),
            }
        })
        .collect())
}

/// One shuffled split with `round(n·test_fraction)` test samples, at least
/// one on each side.
pub fn holdout_split(n: usize, test_fraction: f64, seed: u64) -> Result<Fold> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    if n < 2 {
        return Err(Error::Input(format!("holdout needs at least 2 samples, got {n}")));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let order = shuffled(n, seed);
    Ok(Fold { test: order[..n_test].to_vec(), train: order[n_test..].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_into_five() {
        let folds = kfold_split(10, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(folds, kfold_split(10, 5, 1).unwrap());
        assert_ne!(folds, kfold_split(10, 5, 2).unwrap());
    }

    #[test]
    fn uneven_sizes() {
        let sizes: Vec<usize> = kfold_split(11, 3, 0).unwrap().iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn errors() {
        assert!(kfold_split(3, 5, 0).is_err());
        assert!(kfold_split(3, 1, 0).is_err());
        assert!(holdout_split(10, 1.0, 0).is_err());
    }

    #[test]
    fn holdout_partitions() {
        let f = holdout_split(512, 0.2, 9).unwrap();
        assert_eq!(f.test.len(), 102);
        let mut all = [f.test.clone(), f.train.clone()].concat();
        all.sort();
        assert_eq!(all, (0..512).collect::<Vec<_>>());
    }
}
