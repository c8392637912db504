use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, CartParams, TreeModel};
use crate::error::{Error, Result};
use crate::integration::FeatureMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `max(1, ⌊p/3⌋)`.
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            mtry: None,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    /// Seed of each tree's SplitMix64 stream.
    pub tree_seeds: Vec<u64>,
    pub mtry: usize,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged CART ensemble. Tree `i` draws its bootstrap sample and split
/// candidates from `SplitMix64(seed + i)`, so results do not depend on
/// thread scheduling.
pub fn fit_random_forest(x: &FeatureMatrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let p = x.n_cols();
    let n = x.n_rows();
    if params.n_trees == 0 {
        return Err(Error::invalid("a forest needs at least one tree"));
    }
    let mtry = params.resolved_mtry(p);
    if mtry == 0 || mtry > p {
        return Err(Error::invalid(format!("mtry must lie in 1..={p}, got {mtry}")));
    }
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|i| seed.wrapping_add(i)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = SplitMix64::new(s);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, samples, &cart, mtry, Some(&mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees, tree_seeds, mtry })
}
