//! Seeded train/test splits and K-fold assignment.
//!
//! All shuffling goes through `ChaCha8Rng` so a seed reproduces the same indices on
//! every platform.

use super::DataError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `(train, validation)` indices for fold `f`, both ascending.
    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        assert!(f < self.k);
        let (val, train): (Vec<usize>, Vec<usize>) = (0..self.fold_of.len()).partition(|&i| self.fold_of[i] == f);
        (train, val)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-class index lists, each shuffled.
fn shuffled_classes(labels: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    for g in &mut groups {
        g.shuffle(rng);
    }
    groups
}

/// Picks `count` indices so that every class gets the floor or ceiling of its
/// proportional share. Leftover slots go to the largest fractional remainders,
/// lower class index first on ties.
fn stratified_pick(labels: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = labels.len();
    let groups = shuffled_classes(labels, rng);
    let mut quotas: Vec<usize> = groups.iter().map(|g| g.len() * count / n).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    // remainder of len*count/n, compared as integers to avoid float ties
    order.sort_by_key(|&c| (std::cmp::Reverse(groups[c].len() * count % n), c));
    for &c in order.iter().take(count - assigned) {
        quotas[c] += 1;
    }
    let mut picked: Vec<usize> = groups
        .iter()
        .zip(&quotas)
        .flat_map(|(g, &q)| g[..q].iter().copied())
        .collect();
    picked.sort_unstable();
    picked
}

fn complement(n: usize, picked: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; n];
    for &i in picked {
        mask[i] = true;
    }
    (0..n).filter(|&i| !mask[i]).collect()
}

/// Splits `0..n` into train and test. The test side has `floor(n * test_fraction)`
/// samples; with `stratify_labels` every class keeps its proportion within one
/// sample.
pub fn train_test_split(
    n: usize,
    test_fraction: f64,
    seed: u64,
    stratify_labels: Option<&[usize]>,
) -> Result<SplitIndices, DataError> {
    let degenerate = DataError::DegenerateSplit {
        n,
        fraction: test_fraction,
    };
    if !(test_fraction > 0.0 && test_fraction < 1.0) || n < 2 {
        return Err(degenerate);
    }
    let n_test = (n as f64 * test_fraction + 1e-9).floor() as usize;
    if n_test == 0 || n_test >= n {
        return Err(degenerate);
    }
    let mut rng = rng(seed);
    let test_idx = match stratify_labels {
        Some(labels) => {
            assert_eq!(labels.len(), n, "label count must equal n");
            stratified_pick(labels, n_test, &mut rng)
        }
        None => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut t = perm[..n_test].to_vec();
            t.sort_unstable();
            t
        }
    };
    Ok(SplitIndices {
        train_idx: complement(n, &test_idx),
        test_idx,
    })
}

/// `count` stratified indices from `labels` (ascending). Used to draw desk-scale
/// subsamples of large classification sets.
pub fn stratified_subsample(labels: &[usize], count: usize, seed: u64) -> Vec<usize> {
    if count >= labels.len() {
        return (0..labels.len()).collect();
    }
    stratified_pick(labels, count, &mut rng(seed))
}

/// Assigns each of `n` samples to one of `k` folds.
///
/// Samples are shuffled (within each class when stratified) and dealt round-robin,
/// so fold sizes differ by at most one and, when stratified, so do the per-class
/// counts.
pub fn kfold(n: usize, k: usize, seed: u64, stratify_labels: Option<&[usize]>) -> Result<FoldAssignment, DataError> {
    if k < 2 || k > n {
        return Err(DataError::TooFewSamples { n, k });
    }
    let mut rng = rng(seed);
    let order: Vec<usize> = match stratify_labels {
        Some(labels) => {
            assert_eq!(labels.len(), n, "label count must equal n");
            shuffled_classes(labels, &mut rng).concat()
        }
        None => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            perm
        }
    };
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}
