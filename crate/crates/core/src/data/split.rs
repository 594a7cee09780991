use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ContaminatedDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: ContaminatedDataset,
    pub validation: ContaminatedDataset,
    pub test: ContaminatedDataset,
    /// Original row index of each member, per split.
    pub indices: [Vec<usize>; 3],
}

/// Shuffled disjoint split into train/validation/test by `fractions`.
///
/// Sizes are `round(f * N)` for the first two parts; the test part takes
/// the remainder.
pub fn split(dataset: &ContaminatedDataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid(format!("split fractions {fractions:?} must lie in [0, 1]")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions sum to {total}, expected 1")));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    // stable order inside each part keeps bookkeeping easy to read
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits {
        train: dataset.select(&train)?,
        validation: dataset.select(&val)?,
        test: dataset.select(&test)?,
        indices: [train, val, test],
    })
}
