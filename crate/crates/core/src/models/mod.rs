//! Regression models predicting median household income: OLS, CART,
//! random forest and gradient boosting, plus metrics, seeded splits and
//! grid-search cross-validation.

mod cv;
mod forest;
mod gbm;
mod linear;
mod metrics;
mod split;
mod tree;

use serde::{Deserialize, Serialize};

pub use cv::{grid_search_cv, kfold_indices, CvCell, CvReport};
pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use gbm::{fit_gbm, GbmModel, GbmParams};
pub use linear::{fit_ols, LinearModel, RIDGE_LAMBDA};
pub use metrics::{evaluate, Metrics};
pub use split::{train_size, train_test_split, SplitSpec};
pub use tree::{fit_cart, CartParams, TreeArrays, TreeModel, TreeNode};

use crate::error::{Error, Result};
use crate::integration::FeatureMatrix;

/// Version tag written into model dumps.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    LinearRegression,
    RandomForest,
    GradientBoosting,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [
        ModelFamily::LinearRegression,
        ModelFamily::RandomForest,
        ModelFamily::GradientBoosting,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::LinearRegression => "linear_regression",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::GradientBoosting => "gradient_boosting",
        }
    }
}

/// A model family with concrete hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ModelSpec {
    LinearRegression,
    RandomForest(ForestParams),
    GradientBoosting(GbmParams),
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::LinearRegression => ModelFamily::LinearRegression,
            ModelSpec::RandomForest(_) => ModelFamily::RandomForest,
            ModelSpec::GradientBoosting(_) => ModelFamily::GradientBoosting,
        }
    }

    pub fn fit(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Result<Model> {
        Ok(match self {
            ModelSpec::LinearRegression => Model::Linear(fit_ols(x, y)?),
            ModelSpec::RandomForest(p) => Model::Forest(fit_random_forest(x, y, p, seed)?),
            ModelSpec::GradientBoosting(p) => Model::Gbm(fit_gbm(x, y, p, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Gbm(GbmModel),
}

impl Model {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(x),
            Model::Tree(m) => m.predict_row(x),
            Model::Forest(m) => m.predict_row(x),
            Model::Gbm(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Parameter count convention: linear `p + 1`; a tree counts 2 per internal
/// node (feature, threshold) and 1 per leaf; ensembles sum their trees, and
/// boosting adds 1 for the initial value.
pub fn count_parameters(model: &Model) -> usize {
    fn tree(t: &TreeModel) -> usize {
        2 * t.n_internal() + t.n_leaves()
    }
    match model {
        Model::Linear(m) => m.coefficients.len() + 1,
        Model::Tree(t) => tree(t),
        Model::Forest(f) => f.trees.iter().map(tree).sum(),
        Model::Gbm(g) => 1 + g.trees.iter().map(tree).sum::<usize>(),
    }
}

/// Versioned on-disk model with its feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDump {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    /// Normalization applied to inputs before prediction, if any.
    pub feature_stats: Option<Vec<crate::integration::ColumnStats>>,
    pub model: Model,
}

impl ModelDump {
    pub fn new(feature_names: Vec<String>, feature_stats: Option<Vec<crate::integration::ColumnStats>>, model: Model) -> Self {
        ModelDump {
            format_version: MODEL_FORMAT_VERSION,
            feature_names,
            feature_stats,
            model,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: ModelDump = serde_json::from_str(text)?;
        if dump.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                dump.format_version
            )));
        }
        Ok(dump)
    }
}
