use serde::{Deserialize, Serialize};

use super::{evaluate, ModelSpec};
use crate::error::{Error, Result};
use crate::integration::FeatureMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub spec: ModelSpec,
    pub fold_r2: Vec<Option<f64>>,
    /// `None` if any fold had an undefined R².
    pub mean_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k_folds: usize,
    pub seed: u64,
    pub cells: Vec<CvCell>,
    pub best: usize,
}

impl CvReport {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.cells[self.best].spec
    }
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds whose sizes differ by ≤ 1.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if n / k < 2 {
        return Err(Error::invalid(format!("{n} rows give folds smaller than 2 rows with k={k}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut idx);
    Ok((0..k).map(|f| idx[f * n / k..(f + 1) * n / k].to_vec()).collect())
}

/// Mean validation R² for every grid cell; the best cell has the highest
/// mean, ties resolved by declaration order.
pub fn grid_search_cv(grid: &[ModelSpec], k_folds: usize, seed: u64, x: &FeatureMatrix, y: &[f64]) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::invalid("parameter grid is empty"));
    }
    let folds = kfold_indices(x.n_rows(), k_folds, seed)?;
    let mut cells = Vec::with_capacity(grid.len());
    for spec in grid {
        let mut fold_r2 = Vec::with_capacity(k_folds);
        for (f, valid) in folds.iter().enumerate() {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = spec.fit(&xt, &yt, seed)?;
            let xv = x.select_rows(valid);
            let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            fold_r2.push(evaluate(&yv, &model.predict(&xv))?.r2);
        }
        let mean_r2 = fold_r2
            .iter()
            .copied()
            .sum::<Option<f64>>()
            .map(|s| s / k_folds as f64);
        cells.push(CvCell {
            spec: spec.clone(),
            fold_r2,
            mean_r2,
        });
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        if let Some(m) = c.mean_r2 {
            if cells[best].mean_r2.is_none_or(|b| m > b) {
                best = i;
            }
        }
    }
    Ok(CvReport {
        k_folds,
        seed,
        cells,
        best,
    })
}
