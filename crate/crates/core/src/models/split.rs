use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Number of training rows, `⌈fraction · n⌉`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    // The small offset keeps exact products such as 0.8 · 10 from rounding up.
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Seeded Fisher-Yates permutation of `0..n`, cut into (train, test) indices.
pub fn train_test_split(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 rows to split, got {n}")));
    }
    let n_train = train_size(n, spec.train_fraction);
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(format!(
            "fraction {} of {n} rows leaves an empty partition",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(spec.seed).shuffle(&mut idx);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}
