//! Greedy least-squares regression trees (CART).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integration::FeatureMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

/// One node. Internal nodes route `x[feature] <= threshold` to `left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Mean of the training targets routed here.
    pub value: f64,
    pub n_samples: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// Flat node array; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeArrays", try_from = "TreeArrays")]
pub struct TreeModel {
    pub n_features: usize,
    pub nodes: Vec<TreeNode>,
}

impl TreeModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match node.feature {
                None => return i,
                Some(f) => i = if x[f] <= node.threshold { node.left } else { node.right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(nodes, n.left).max(go(nodes, n.right))
            }
        }
        go(&self.nodes, 0)
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter_map(|n| n.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Serialized form: parallel node arrays, `feature = -1` marks a leaf.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeArrays {
    pub n_features: usize,
    pub feature: Vec<i64>,
    pub threshold: Vec<f64>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub value: Vec<f64>,
    pub n_samples: Vec<usize>,
}

impl From<TreeModel> for TreeArrays {
    fn from(t: TreeModel) -> Self {
        TreeArrays {
            n_features: t.n_features,
            feature: t.nodes.iter().map(|n| n.feature.map_or(-1, |f| f as i64)).collect(),
            threshold: t.nodes.iter().map(|n| n.threshold).collect(),
            left: t.nodes.iter().map(|n| n.left).collect(),
            right: t.nodes.iter().map(|n| n.right).collect(),
            value: t.nodes.iter().map(|n| n.value).collect(),
            n_samples: t.nodes.iter().map(|n| n.n_samples).collect(),
        }
    }
}

impl TryFrom<TreeArrays> for TreeModel {
    type Error = Error;

    fn try_from(a: TreeArrays) -> Result<Self> {
        let n = a.feature.len();
        if n == 0 || [a.threshold.len(), a.left.len(), a.right.len(), a.value.len(), a.n_samples.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::data("tree dump arrays are empty or of unequal length"));
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let feature = match a.feature[i] {
                -1 => None,
                f if f >= 0 && (f as usize) < a.n_features => Some(f as usize),
                f => return Err(Error::data(format!("tree node {i} has invalid feature {f}"))),
            };
            if feature.is_some() && (a.left[i] <= i || a.right[i] <= i || a.left[i] >= n || a.right[i] >= n) {
                return Err(Error::data(format!("tree node {i} has invalid children")));
            }
            if feature.is_some() && !a.threshold[i].is_finite() {
                return Err(Error::data(format!("tree node {i} has a non-finite threshold")));
            }
            nodes.push(TreeNode {
                feature,
                threshold: a.threshold[i],
                left: a.left[i],
                right: a.right[i],
                value: a.value[i],
                n_samples: a.n_samples[i],
            });
        }
        Ok(TreeModel {
            n_features: a.n_features,
            nodes,
        })
    }
}

/// Fits a tree on all rows, evaluating every feature at every split.
pub fn fit_cart(x: &FeatureMatrix, y: &[f64], params: &CartParams) -> Result<TreeModel> {
    let samples: Vec<usize> = (0..x.n_rows()).collect();
    grow_tree(x, y, samples, params, x.n_cols(), None)
}

/// Grows a tree on `samples` (duplicates allowed). When `mtry < p`, each
/// split draws `mtry` candidate features from `rng`.
pub(crate) fn grow_tree(
    x: &FeatureMatrix,
    y: &[f64],
    samples: Vec<usize>,
    params: &CartParams,
    mtry: usize,
    rng: Option<&mut SplitMix64>,
) -> Result<TreeModel> {
    let p = x.n_cols();
    if y.len() != x.n_rows() {
        return Err(Error::invalid(format!("{} rows but {} targets", x.n_rows(), y.len())));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be >= 1"));
    }
    if samples.is_empty() || samples.len() < 2 * params.min_samples_leaf {
        return Err(Error::invalid(format!(
            "{} samples cannot satisfy min_samples_leaf {}",
            samples.len(),
            params.min_samples_leaf
        )));
    }
    if mtry == 0 || mtry > p {
        return Err(Error::invalid(format!("mtry must lie in 1..={p}, got {mtry}")));
    }
    let mut builder = Builder {
        x,
        y,
        params,
        mtry,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(samples.len()),
    };
    let mut samples = samples;
    builder.grow(&mut samples, 0);
    Ok(TreeModel {
        n_features: p,
        nodes: builder.nodes,
    })
}

struct Builder<'a, 'r> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: &'a CartParams,
    mtry: usize,
    rng: Option<&'r mut SplitMix64>,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, f64)>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_, '_> {
    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let m = samples.len();
        let mean = samples.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64;
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: mean,
            n_samples: m,
        });

        let first = self.y[samples[0]];
        let pure = samples.iter().all(|&i| self.y[i] == first);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || m < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some(split) = self.best_split(samples, mean) else {
            return id;
        };

        let f = split.feature;
        let x = self.x;
        samples.sort_by(|&a, &b| {
            let (va, vb) = (x.get(a, f) <= split.threshold, x.get(b, f) <= split.threshold);
            vb.cmp(&va)
        });
        let n_left = samples.iter().take_while(|&&i| x.get(i, f) <= split.threshold).count();
        let (left, right) = samples.split_at_mut(n_left);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = Some(f);
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.n_cols();
        match self.rng.as_deref_mut() {
            Some(rng) if self.mtry < p => {
                let mut all: Vec<usize> = (0..p).collect();
                for i in 0..self.mtry {
                    let j = i + rng.below(p - i);
                    all.swap(i, j);
                }
                all.truncate(self.mtry);
                all.sort_unstable();
                all
            }
            _ => (0..p).collect(),
        }
    }

    /// Best SSE reduction over midpoint thresholds; ties keep the lower
    /// feature index, then the lower threshold.
    fn best_split(&mut self, samples: &[usize], mean: f64) -> Option<Split> {
        let msl = self.params.min_samples_leaf;
        let m = samples.len();
        let mut best: Option<Split> = None;
        for f in self.candidate_features() {
            let pairs = &mut self.scratch;
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x.get(i, f), self.y[i] - mean)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let mut left_sum = 0.0;
            for i in 0..m - 1 {
                left_sum += pairs[i].1;
                let n_left = i + 1;
                if pairs[i].0 == pairs[i + 1].0 || n_left < msl || m - n_left < msl {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE(parent) − SSE(children) on centred targets.
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (m - n_left) as f64
                    - total * total / m as f64;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
