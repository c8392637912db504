use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, CartParams, TreeModel};
use crate::error::{Error, Result};
use crate::integration::FeatureMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Row fraction drawn (without replacement) per round; 1 uses every row.
    pub subsample: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: Some(3),
            min_samples_leaf: 1,
            subsample: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub init_value: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeModel>,
    /// Training MSE after each round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_mse: Vec<f64>,
}

impl GbmModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.init_value + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}

/// Stagewise least-squares boosting on residuals.
pub fn fit_gbm(x: &FeatureMatrix, y: &[f64], params: &GbmParams, seed: u64) -> Result<GbmModel> {
    let n = x.n_rows();
    if params.n_rounds == 0 {
        return Err(Error::invalid("boosting needs at least one round"));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::invalid(format!(
            "learning rate must lie in (0, 1], got {}",
            params.learning_rate
        )));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(Error::invalid(format!("subsample must lie in (0, 1], got {}", params.subsample)));
    }
    if y.len() != n || n == 0 {
        return Err(Error::invalid(format!("{n} rows but {} targets", y.len())));
    }
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let init = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut trace = Vec::with_capacity(params.n_rounds);
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    for round in 0..params.n_rounds {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let samples: Vec<usize> = if n_sub == n {
            (0..n).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            SplitMix64::new(seed.wrapping_add(round as u64)).shuffle(&mut idx);
            idx.truncate(n_sub);
            idx.sort_unstable();
            idx
        };
        let tree = grow_tree(x, &residual, samples, &cart, x.n_cols(), None)?;
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(x.row(i));
        }
        trace.push(y.iter().zip(&pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / n as f64);
        trees.push(tree);
    }
    Ok(GbmModel {
        init_value: init,
        learning_rate: params.learning_rate,
        trees,
        train_mse: trace,
    })
}
