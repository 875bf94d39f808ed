use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// `round(n * fraction)`, rounding halves up.
pub fn test_size(n: usize, test_fraction: f64) -> usize {
    ((n as f64 * test_fraction) + 0.5).floor() as usize
}

/// Seeded train/test partition. Both parts keep input order.
pub fn split_dataset(dataset: &Dataset, seed: u64, test_fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let k = test_size(n, test_fraction).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..k] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (r, t) in dataset.records().iter().zip(is_test) {
        if t {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    let vocab = dataset.vocabulary().clone();
    Ok((Dataset::new(train, vocab.clone())?, Dataset::new(test, vocab)?))
}
