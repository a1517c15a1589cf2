//! Greedy forward feature selection under stratified k-fold cross-validation,
//! and the stratified train/test split used around it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::extract::FEATURE_LEN;
use super::model::{categories_of, fit_subset, label_indices, LabeledExample};
use super::FeatureError;

pub const DEFAULT_K_MAX: usize = 10;
pub const N_FOLDS: usize = 5;
pub const MIN_GAIN: f64 = 0.005;
pub const MIN_EXAMPLES: usize = 10;
pub const DEFAULT_FOLD_SEED: u64 = 0x5eed;

/// Fold index of every example, stratified by label.
pub fn stratified_folds(labels: &[usize], n_folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut folds = vec![0; labels.len()];
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            folds[i] = k % n_folds;
        }
    }
    folds
}

/// Per-class shuffled split; each class contributes `round(train_frac · n)`
/// examples to training (at least one to each side when it has two or more).
pub fn stratified_split(labels: &[String], train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<&String> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == *c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (train_frac * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Cross-validated accuracy of the classifier restricted to `selected`.
pub fn cv_accuracy(
    train: &[LabeledExample],
    labels: &[usize],
    n_classes: usize,
    folds: &[usize],
    selected: &[usize],
) -> f64 {
    let mut correct = 0usize;
    for f in 0..N_FOLDS {
        let (fit_idx, held): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| folds[i] != f);
        if held.is_empty() || fit_idx.is_empty() {
            continue;
        }
        let fit_rows: Vec<&LabeledExample> = fit_idx.iter().map(|&i| &train[i]).collect();
        let fit_labels: Vec<usize> = fit_idx.iter().map(|&i| labels[i]).collect();
        let (norm, clf) = fit_subset(&fit_rows, &fit_labels, n_classes, selected);
        correct += held
            .iter()
            .filter(|&&i| clf.predict(&norm.project(&train[i].features, selected)) == labels[i])
            .count();
    }
    correct as f64 / train.len() as f64
}

/// Greedy forward selection maximizing cross-validated accuracy.
///
/// Each round adds the feature with the best accuracy (lowest index on ties);
/// selection stops once the best addition gains less than half a percentage
/// point or `k_max` features are chosen. The first feature is always taken.
pub fn select_features(train: &[LabeledExample], k_max: usize, fold_seed: u64) -> Result<Vec<usize>, FeatureError> {
    let categories = categories_of(train)?;
    if train.len() < MIN_EXAMPLES {
        return Err(FeatureError::DegenerateTrainingSet(format!(
            "{} examples, need at least {MIN_EXAMPLES}",
            train.len()
        )));
    }
    let labels = label_indices(train, &categories);
    let folds = stratified_folds(&labels, N_FOLDS, fold_seed);
    let n_classes = categories.len();
    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0.0;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());

    while selected.len() < k_max.min(FEATURE_LEN) {
        let candidates: Vec<usize> = (0..FEATURE_LEN).filter(|c| !selected.contains(c)).collect();
        let chunk = candidates.len().div_ceil(workers);
        let scores: Vec<(usize, f64)> = std::thread::scope(|s| {
            let handles: Vec<_> = candidates
                .chunks(chunk)
                .map(|part| {
                    let (selected, labels, folds) = (&selected, &labels, &folds);
                    s.spawn(move || {
                        part.iter()
                            .map(|&c| {
                                let mut trial = selected.clone();
                                trial.push(c);
                                (c, cv_accuracy(train, labels, n_classes, folds, &trial))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("cv worker")).collect()
        });
        let (best, acc) = scores
            .into_iter()
            .fold((usize::MAX, f64::NEG_INFINITY), |(bc, ba), (c, a)| if a > ba { (c, a) } else { (bc, ba) });
        if !selected.is_empty() && acc - current < MIN_GAIN {
            break;
        }
        selected.push(best);
        current = acc;
    }
    Ok(selected)
}
