//! Patient-wise data splits.
//!
//! Splits operate on patient ids, never on individual sub-trajectories, so
//! that no patient contributes to both sides of a split. Fold assignment is
//! a seeded shuffle of the sorted unique ids followed by round-robin
//! dealing, which keeps fold sizes within one of each other.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hash::stream_seed;

fn unique_sorted(patients: &[String]) -> Vec<String> {
    patients
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Deal unique patient ids into `n_folds` folds, shuffled by `seed`. Folds
/// may be empty when there are fewer patients than folds; each returned
/// fold is sorted.
pub fn patient_folds(patients: &[String], n_folds: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if n_folds < 2 {
        return Err(Error::InvalidParam(format!(
            "cross-validation needs at least 2 folds, got {n_folds}"
        )));
    }
    let mut unique = unique_sorted(patients);
    if unique.is_empty() {
        return Err(Error::InvalidParam("no patients to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "patient-folds"));
    unique.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); n_folds];
    for (i, patient) in unique.into_iter().enumerate() {
        folds[i % n_folds].push(patient);
    }
    for fold in folds.iter_mut() {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Single train/test split holding out roughly `test_fraction` of the
/// unique patients (at least one on each side). Both halves are sorted.
pub fn holdout_split(
    patients: &[String],
    seed: u64,
    test_fraction: f64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "holdout test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut unique = unique_sorted(patients);
    let n = unique.len();
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "holdout split needs at least 2 patients, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "patient-holdout"));
    unique.shuffle(&mut rng);
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut test: Vec<String> = unique.drain(..n_test).collect();
    let mut train = unique;
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
