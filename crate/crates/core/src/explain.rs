//! Shapley attributions under the interventional value function
//! `v(S) = E_z[f(x_S, z_{¬S})]` over a background set.
//!
//! [`shap_exact`] enumerates all `2^M` coalitions for any predictor.
//! [`tree_shap`] computes the same values for tree models in time linear in
//! the number of leaves: for a fixed background row `z`, a leaf is reached
//! by the spliced row iff every feature on its path where `x` was followed
//! is in `S` and every feature where `z` was followed is not. That leaf is
//! an AND-game whose Shapley values have a closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LinearModel, Model, TreeModel};

/// Largest feature count accepted by the coalition enumerator.
pub const MAX_EXACT_FEATURES: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("background set is empty"));
        };
        let m = first.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("background rows differ in width"));
        }
        Ok(BackgroundSet { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub base_value: f64,
    pub contributions: Vec<f64>,
}

impl Explanation {
    /// `base_value + Σφ`, which equals the model output at the explained row.
    pub fn total(&self) -> f64 {
        self.base_value + self.contributions.iter().sum::<f64>()
    }
}

fn check_width(x: &[f64], bg: &BackgroundSet, expected: Option<usize>) -> Result<usize> {
    let m = bg.n_features();
    if x.len() != m {
        return Err(Error::invalid(format!(
            "row has {} features, background has {m}",
            x.len()
        )));
    }
    if let Some(e) = expected {
        if e != m {
            return Err(Error::invalid(format!("model expects {e} features, row has {m}")));
        }
    }
    Ok(m)
}

/// Brute-force Shapley values over all coalitions.
pub fn shap_exact<F>(predict: F, x: &[f64], bg: &BackgroundSet, max_features: usize) -> Result<Explanation>
where
    F: Fn(&[f64]) -> f64,
{
    let m = check_width(x, bg, None)?;
    if max_features > MAX_EXACT_FEATURES {
        return Err(Error::invalid(format!(
            "max_features {max_features} exceeds the enumeration limit {MAX_EXACT_FEATURES}"
        )));
    }
    if m > max_features {
        return Err(Error::invalid(format!(
            "{m} features exceed max_features {max_features}; use tree_shap"
        )));
    }
    let n_masks = 1usize << m;
    let mut value = vec![0.0; n_masks];
    let mut spliced = vec![0.0; m];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut acc = 0.0;
        for z in bg.rows() {
            for j in 0..m {
                spliced[j] = if mask >> j & 1 == 1 { x[j] } else { z[j] };
            }
            acc += predict(&spliced);
        }
        *v = acc / bg.len() as f64;
    }
    // weight[s] = s!(M−s−1)!/M!
    let fact: Vec<f64> = (0..=m).scan(1.0, |f, k| {
        let out = *f;
        *f *= (k + 1) as f64;
        Some(out)
    }).collect();
    let weight: Vec<f64> = (0..m).map(|s| fact[s] * fact[m - s - 1] / fact[m]).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in (0..n_masks).filter(|mask| mask & bit == 0) {
            let s = mask.count_ones() as usize;
            *p += weight[s] * (value[mask | bit] - value[mask]);
        }
    }
    Ok(Explanation {
        base_value: value[0],
        contributions: phi,
    })
}

/// A sum of trees: `offset + scale · Σ tree(x)`.
struct TreeSum<'a> {
    offset: f64,
    scale: f64,
    trees: &'a [TreeModel],
}

fn as_tree_sum(model: &Model) -> Result<TreeSum<'_>> {
    match model {
        Model::Tree(t) => Ok(TreeSum {
            offset: 0.0,
            scale: 1.0,
            trees: std::slice::from_ref(t),
        }),
        Model::Forest(f) => Ok(TreeSum {
            offset: 0.0,
            scale: 1.0 / f.trees.len() as f64,
            trees: &f.trees,
        }),
        Model::Gbm(g) => Ok(TreeSum {
            offset: g.init_value,
            scale: g.learning_rate,
            trees: &g.trees,
        }),
        Model::Linear(_) => Err(Error::invalid("tree_shap needs a tree model; use linear_shap")),
    }
}

/// Interventional TreeSHAP for a tree, forest or boosted ensemble.
pub fn tree_shap(model: &Model, x: &[f64], bg: &BackgroundSet) -> Result<Explanation> {
    let sum = as_tree_sum(model)?;
    let m = check_width(x, bg, sum.trees.first().map(|t| t.n_features))?;
    let mut phi = vec![0.0; m];
    let mut base = 0.0;
    let mut state = vec![Side::Unseen; m];
    let mut path = Vec::new();
    for tree in sum.trees {
        for z in bg.rows() {
            base += tree.predict_row(z);
            recurse(tree, 0, x, z, &mut state, &mut path, 0, 0, &mut phi);
        }
    }
    let k = bg.len() as f64;
    for p in &mut phi {
        *p *= sum.scale / k;
    }
    Ok(Explanation {
        base_value: sum.offset + sum.scale * base / k,
        contributions: phi,
    })
}

/// Explanations for many rows, computed in parallel, returned in row order.
pub fn tree_shap_rows(model: &Model, rows: &[Vec<f64>], bg: &BackgroundSet) -> Result<Vec<Explanation>> {
    rows.par_iter().map(|x| tree_shap(model, x, bg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Unseen,
    /// Feature taken from `x` (member of the coalition).
    X,
    /// Feature taken from `z`.
    Z,
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &TreeModel,
    node: usize,
    x: &[f64],
    z: &[f64],
    state: &mut [Side],
    path: &mut Vec<usize>,
    n_x: usize,
    n_z: usize,
    phi: &mut [f64],
) {
    let nd = &tree.nodes[node];
    let Some(f) = nd.feature else {
        if n_x + n_z == 0 {
            return;
        }
        // AND-game: Shapley weight (a−1)!b!/(a+b)! = 1/(a·C(a+b, a)).
        let c = binomial(n_x + n_z, n_x);
        let v = nd.value;
        for &j in path.iter() {
            match state[j] {
                Side::X => phi[j] += v / (n_x as f64 * c),
                Side::Z => phi[j] -= v / (n_z as f64 * c),
                Side::Unseen => unreachable!("path features are always assigned"),
            }
        }
        return;
    };
    let child = |goes_left: bool| if goes_left { nd.left } else { nd.right };
    let x_child = child(x[f] <= nd.threshold);
    let z_child = child(z[f] <= nd.threshold);
    if x_child == z_child {
        recurse(tree, x_child, x, z, state, path, n_x, n_z, phi);
        return;
    }
    match state[f] {
        Side::X => recurse(tree, x_child, x, z, state, path, n_x, n_z, phi),
        Side::Z => recurse(tree, z_child, x, z, state, path, n_x, n_z, phi),
        Side::Unseen => {
            path.push(f);
            state[f] = Side::X;
            recurse(tree, x_child, x, z, state, path, n_x + 1, n_z, phi);
            state[f] = Side::Z;
            recurse(tree, z_child, x, z, state, path, n_x, n_z + 1, phi);
            state[f] = Side::Unseen;
            path.pop();
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact interventional Shapley values of a linear model:
/// `φ_i = β_i (x_i − mean_bg x_i)`.
pub fn linear_shap(model: &LinearModel, x: &[f64], bg: &BackgroundSet) -> Result<Explanation> {
    let m = check_width(x, bg, Some(model.coefficients.len()))?;
    let k = bg.len() as f64;
    let means: Vec<f64> = (0..m).map(|j| bg.rows().iter().map(|r| r[j]).sum::<f64>() / k).collect();
    let contributions = (0..m).map(|j| model.coefficients[j] * (x[j] - means[j])).collect();
    Ok(Explanation {
        base_value: model.predict_row(&means),
        contributions,
    })
}

/// Dispatches to [`linear_shap`] or [`tree_shap`].
pub fn explain_model(model: &Model, x: &[f64], bg: &BackgroundSet) -> Result<Explanation> {
    match model {
        Model::Linear(l) => linear_shap(l, x, bg),
        _ => tree_shap(model, x, bg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub mean_abs: Vec<f64>,
    /// Feature indices ordered by descending mean |φ|, ties by index.
    pub order: Vec<usize>,
    /// 1-based rank per feature.
    pub rank: Vec<usize>,
    pub positive_fraction: Vec<f64>,
}

pub fn summarize(explanations: &[Explanation]) -> Result<GlobalSummary> {
    let Some(first) = explanations.first() else {
        return Err(Error::invalid("cannot summarize zero explanations"));
    };
    let m = first.contributions.len();
    if explanations.iter().any(|e| e.contributions.len() != m) {
        return Err(Error::invalid("explanations differ in feature count"));
    }
    let k = explanations.len() as f64;
    let mean_abs: Vec<f64> = (0..m)
        .map(|j| explanations.iter().map(|e| e.contributions[j].abs()).sum::<f64>() / k)
        .collect();
    let positive_fraction = (0..m)
        .map(|j| explanations.iter().filter(|e| e.contributions[j] > 0.0).count() as f64 / k)
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    let mut rank = vec![0; m];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    Ok(GlobalSummary {
        mean_abs,
        order,
        rank,
        positive_fraction,
    })
}
