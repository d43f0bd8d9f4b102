use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Dataset, Target};
use crate::error::{Error, Result};
use crate::rng;

/// Index sets of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Groups indices by class label; regression data forms a single group.
fn strata(ds: &Dataset, indices: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        let key = match ds.samples[i].target {
            Target::Label(l) => l,
            Target::Value(_) => 0,
        };
        groups.entry(key).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Stratified k-fold partition. Fold `i` is the test set of split `i`; a
/// stratified `val_fraction` of the remaining indices is held back for early
/// stopping.
pub fn split_kfold(ds: &Dataset, k: usize, seed: u64, val_fraction: f64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > ds.len() {
        return Err(Error::config(format!(
            "k = {k} exceeds the number of samples ({})",
            ds.len()
        )));
    }
    let mut rng = rng::rng(rng::derive(seed, &[0x6b66]));
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for mut group in strata(ds, &all) {
        group.shuffle(&mut rng);
        for i in group {
            folds[slot % k].push(i);
            slot += 1;
        }
    }

    folds
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let rest: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let (train, validation) =
                split_validation(ds, &rest, val_fraction, rng::derive(seed, &[f as u64]))?;
            let mut test = test.clone();
            test.sort_unstable();
            Ok(FoldSplit {
                train,
                validation,
                test,
            })
        })
        .collect()
}

/// Stratified hold-out of `fraction` of `indices` into a validation set.
/// Returns sorted `(train, validation)`; both are non-empty whenever
/// `indices` has at least two entries.
pub fn split_validation(
    ds: &Dataset,
    indices: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if indices.len() < 2 {
        return Err(Error::config("need at least two samples to hold out a validation set"));
    }
    let mut rng = rng::rng(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut group in strata(ds, indices) {
        group.shuffle(&mut rng);
        let take = ((fraction * group.len() as f64).round() as usize).min(group.len());
        val.extend_from_slice(&group[..take]);
        train.extend_from_slice(&group[take..]);
    }
    if val.is_empty() {
        val.push(train.pop().expect("at least two indices"));
    } else if train.is_empty() {
        train.push(val.pop().expect("at least two indices"));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, Task, TimeChannel};

    fn labelled(labels: &[u32]) -> Dataset {
        Dataset {
            samples: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Sample {
                    id: format!("s{i}"),
                    channels: vec![TimeChannel {
                        times: vec![0.0],
                        values: vec![0.0],
                    }],
                    target: Target::Label(l),
                })
                .collect(),
            channel_names: vec!["a".into()],
            task: Task::Classification,
            window_hours: 48.0,
        }
    }

    #[test]
    fn ten_samples_five_folds() {
        let ds = labelled(&[0, 1, 0, 1, 0, 0, 1, 0, 0, 1]);
        let folds = split_kfold(&ds, 5, 3, 0.15).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            let mut all: Vec<usize> = f
                .train
                .iter()
                .chain(&f.validation)
                .chain(&f.test)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
            assert!(!f.validation.is_empty());
        }
    }

    #[test]
    fn stratified_positives() {
        let ds = labelled(&[0, 0, 0, 0, 1, 0, 0, 0, 1, 0]);
        for seed in 0..20 {
            let folds = split_kfold(&ds, 2, seed, 0.15).unwrap();
            for f in &folds {
                let pos = f
                    .test
                    .iter()
                    .filter(|&&i| ds.samples[i].target == Target::Label(1))
                    .count();
                assert_eq!(pos, 1);
            }
        }
    }

    #[test]
    fn deterministic_and_errors() {
        let ds = labelled(&[0, 1, 0, 1, 0, 1]);
        assert_eq!(split_kfold(&ds, 3, 9, 0.15).unwrap(), split_kfold(&ds, 3, 9, 0.15).unwrap());
        assert!(split_kfold(&ds, 7, 9, 0.15).is_err());
        assert!(split_kfold(&ds, 1, 9, 0.15).is_err());
    }
}
