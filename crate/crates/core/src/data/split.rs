//! Train/validation/test construction.
//!
//! Splits are stratified by class. Inside the training portion only a small
//! fraction of the abnormal rows is kept (rounded half up, at least one); the
//! rest are dropped from training and never moved into validation or test.
//! Features are z-scored with statistics fitted on the retained training rows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{FeatureStats, Label, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Fraction of the training portion's abnormal rows kept for training.
    pub anomaly_train_fraction: f64,
    /// Fraction of each class (outside the test set) carved out for validation.
    pub val_fraction: f64,
    /// Fraction of each class used for testing by [`make_split`].
    pub test_fraction: f64,
    /// Whether to z-score features.
    pub normalize: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            anomaly_train_fraction: 0.10,
            val_fraction: 0.10,
            test_fraction: 0.20,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Abnormal rows of the training portion left out by subsampling.
    pub discarded: Vec<usize>,
}

/// A materialized split: index sets plus normalized subsets.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub fold: Option<usize>,
    pub indices: SplitIndices,
    pub anomaly_train_fraction: f64,
    pub stats: FeatureStats,
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

/// Number of abnormal rows kept: `round_half_up(n·fraction)`, at least one
/// whenever `n > 0`.
pub fn anomaly_keep_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (n as f64 * fraction + 0.5).floor() as usize;
    k.clamp(1, n)
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn check_options(opts: &SplitOptions) -> Result<()> {
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if !(opts.anomaly_train_fraction > 0.0 && opts.anomaly_train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "anomaly_train_fraction must be in (0, 1], got {}",
            opts.anomaly_train_fraction
        )));
    }
    if !in_unit(opts.val_fraction)
        || !in_unit(opts.test_fraction)
        || opts.val_fraction + opts.test_fraction >= 1.0
    {
        return Err(Error::Config(format!(
            "val_fraction {} and test_fraction {} must be in [0, 1) with sum < 1",
            opts.val_fraction, opts.test_fraction
        )));
    }
    Ok(())
}

/// Shuffled row indices of each class.
fn shuffled_classes(ds: &LabeledDataset, rng: &mut ChaCha8Rng) -> [Vec<usize>; 2] {
    let mut normal = ds.indices_of(Label::Normal);
    let mut abnormal = ds.indices_of(Label::Abnormal);
    normal.shuffle(rng);
    abnormal.shuffle(rng);
    [normal, abnormal]
}

/// Turns per-class pools (outside the test set) into validation and
/// training/discarded sets, then normalizes.
fn finish(
    ds: &LabeledDataset,
    fold: Option<usize>,
    pools: [Vec<usize>; 2],
    test: Vec<usize>,
    opts: &SplitOptions,
) -> Result<SplitDataset> {
    let [normal_pool, abnormal_pool] = pools;
    let n_val_normal = round_half_up(opts.val_fraction * normal_pool.len() as f64);
    let n_val_abnormal = round_half_up(opts.val_fraction * abnormal_pool.len() as f64);
    let mut validation: Vec<usize> = normal_pool[..n_val_normal].to_vec();
    validation.extend_from_slice(&abnormal_pool[..n_val_abnormal]);
    let train_normal = &normal_pool[n_val_normal..];
    let train_abnormal = &abnormal_pool[n_val_abnormal..];
    let keep = anomaly_keep_count(train_abnormal.len(), opts.anomaly_train_fraction);
    if train_normal.is_empty() {
        return Err(Error::InvalidBatch(
            "training split has no normal rows".into(),
        ));
    }
    let mut train: Vec<usize> = train_normal.to_vec();
    train.extend_from_slice(&train_abnormal[..keep]);
    let discarded = train_abnormal[keep..].to_vec();

    let sorted = |v: &mut Vec<usize>| v.sort_unstable();
    let mut test = test;
    sorted(&mut train);
    sorted(&mut validation);
    sorted(&mut test);
    let mut discarded = discarded;
    sorted(&mut discarded);

    let stats = if opts.normalize {
        FeatureStats::fit(ds.x(), &train)?
    } else {
        FeatureStats::identity(ds.dim())
    };
    Ok(SplitDataset {
        fold,
        train: ds.subset(&train).normalized(&stats)?,
        validation: ds.subset(&validation).normalized(&stats)?,
        test: ds.subset(&test).normalized(&stats)?,
        indices: SplitIndices {
            train,
            validation,
            test,
            discarded,
        },
        anomaly_train_fraction: opts.anomaly_train_fraction,
        stats,
    })
}

/// Single stratified hold-out split.
pub fn make_split(ds: &LabeledDataset, opts: &SplitOptions, seed: u64) -> Result<SplitDataset> {
    check_options(opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = shuffled_classes(ds, &mut rng);
    let mut test = Vec::new();
    let mut pools: [Vec<usize>; 2] = Default::default();
    for (k, rows) in classes.into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::InvalidBatch(format!(
                "class {} has {} rows; need at least 2 to split",
                if k == 0 { "normal" } else { "abnormal" },
                rows.len()
            )));
        }
        let n_test = round_half_up(opts.test_fraction * rows.len() as f64).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        pools[k] = rows[n_test..].to_vec();
    }
    finish(ds, None, pools, test, opts)
}

/// Stratified `k`-fold cross validation; fold `j` is the test set of split `j`.
pub fn kfold(
    ds: &LabeledDataset,
    k: usize,
    opts: &SplitOptions,
    seed: u64,
) -> Result<Vec<SplitDataset>> {
    check_options(opts)?;
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = shuffled_classes(ds, &mut rng);
    for (name, rows) in ["normal", "abnormal"].iter().zip(&classes) {
        if rows.len() < k {
            return Err(Error::InvalidBatch(format!(
                "class {name} has {} rows, fewer than {k} folds",
                rows.len()
            )));
        }
    }
    // deal both classes round-robin with a shared counter: folds differ by at
    // most one row overall and per class
    let mut assignment: Vec<[Vec<usize>; 2]> = vec![Default::default(); k];
    let mut slot = 0;
    for (c, rows) in classes.iter().enumerate() {
        for &i in rows {
            assignment[slot % k][c].push(i);
            slot += 1;
        }
    }
    (0..k)
        .map(|j| {
            let test: Vec<usize> = assignment[j].iter().flatten().copied().collect();
            let mut pools: [Vec<usize>; 2] = Default::default();
            for c in 0..2 {
                // keep the shuffled order so validation draws are random
                pools[c] = classes[c]
                    .iter()
                    .copied()
                    .filter(|i| !assignment[j][c].contains(i))
                    .collect();
            }
            finish(ds, Some(j), pools, test, opts)
        })
        .collect()
}

/// Reproducibility record of a dataset and its splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub n_normal: usize,
    pub n_abnormal: usize,
    pub splits: Vec<ManifestSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSplit {
    pub fold: Option<usize>,
    pub anomaly_train_fraction: f64,
    pub indices: SplitIndices,
}

impl DatasetManifest {
    pub fn new(ds: &LabeledDataset, splits: &[SplitDataset]) -> Self {
        Self {
            name: ds.name.clone(),
            n: ds.len(),
            d: ds.dim(),
            n_normal: ds.count(Label::Normal),
            n_abnormal: ds.count(Label::Abnormal),
            splits: splits
                .iter()
                .map(|s| ManifestSplit {
                    fold: s.fold,
                    anomaly_train_fraction: s.anomaly_train_fraction,
                    indices: s.indices.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;
    use std::collections::HashSet;

    fn toy(n_normal: usize, n_abnormal: usize) -> LabeledDataset {
        let n = n_normal + n_abnormal;
        let x = Matrix::from_fn(n, 2, |i, j| (i * 3 + j) as f64);
        let y = (0..n)
            .map(|i| {
                if i < n_normal {
                    Label::Normal
                } else {
                    Label::Abnormal
                }
            })
            .collect();
        LabeledDataset::new("toy", x, y).unwrap()
    }

    #[test]
    fn keep_count_rounds_half_up_with_floor_one() {
        assert_eq!(anomaly_keep_count(10, 0.10), 1);
        assert_eq!(anomaly_keep_count(3, 0.10), 1);
        assert_eq!(anomaly_keep_count(15, 0.10), 2);
        assert_eq!(anomaly_keep_count(14, 0.10), 1);
        assert_eq!(anomaly_keep_count(400, 0.10), 40);
        assert_eq!(anomaly_keep_count(0, 0.10), 0);
    }

    #[test]
    fn ten_abnormal_rows_leave_one_for_training() {
        let ds = toy(40, 10);
        let s = make_split(&ds, &SplitOptions::default(), 1).unwrap();
        assert_eq!(s.train.count(Label::Abnormal), 1);
    }

    #[test]
    fn kfold_partitions_rows() {
        let ds = toy(50, 50);
        let folds = kfold(&ds, 5, &SplitOptions::default(), 4).unwrap();
        let mut seen = HashSet::new();
        for f in &folds {
            assert_eq!(f.indices.test.len(), 20);
            assert_eq!(f.test.count(Label::Normal), 10);
            for &i in &f.indices.test {
                assert!(seen.insert(i));
            }
            let train: HashSet<_> = f.indices.train.iter().collect();
            assert!(f.indices.test.iter().all(|i| !train.contains(i)));
            assert!(f.indices.validation.iter().all(|i| !train.contains(i)));
            assert!(f.indices.discarded.iter().all(|i| !train.contains(i)));
            assert!(f
                .indices
                .test
                .iter()
                .all(|i| !f.indices.discarded.contains(i)));
        }
        assert_eq!(seen.len(), 100);
        let again = kfold(&ds, 5, &SplitOptions::default(), 4).unwrap();
        for (a, b) in folds.iter().zip(&again) {
            assert_eq!(a.indices, b.indices);
        }
    }

    #[test]
    fn kfold_rejects_small_class() {
        let ds = toy(20, 3);
        assert!(kfold(&ds, 5, &SplitOptions::default(), 0).is_err());
    }

    #[test]
    fn normalization_fitted_on_train() {
        let ds = toy(30, 30);
        let s = make_split(&ds, &SplitOptions::default(), 2).unwrap();
        let xt = s.train.x();
        for j in 0..2 {
            let mean: f64 = (0..xt.rows()).map(|i| xt.get(i, j)).sum::<f64>() / xt.rows() as f64;
            assert!(mean.abs() < 1e-12);
        }
        let raw = s.stats.denormalize(s.test.x()).unwrap();
        let orig = ds.x().select_rows(&s.indices.test);
        for (a, b) in raw.data().iter().zip(orig.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn manifest_serializes() {
        let ds = toy(10, 10);
        let s = make_split(&ds, &SplitOptions::default(), 0).unwrap();
        let m = DatasetManifest::new(&ds, &[s]);
        let json = m.to_json().unwrap();
        let back: DatasetManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
