//! Spatial equity analytics for cultural infrastructure.
//!
//! The crate scores a uniform city grid by exponential distance decay to
//! cultural assets, aggregates the scores to census tracts, derives
//! per-capita and per-group accessibility, classifies tracts into
//! equal-frequency bins and explains income associations with tree
//! ensembles and exact Shapley attributions.
//!
//! Module map:
//!
//! * [`geometry`] grid construction, polygon containment, centroids, tract assignment
//! * [`spatial_index`] equirectangular projection and a static KD-tree
//! * [`accessibility`] per-category decay scores over the grid
//! * [`integration`] tract table joins, imputation, z-scores, the grid feature matrix
//! * [`equity`] per-capita scores and quantile classification
//! * [`stats`] Pearson correlation analysis
//! * [`models`] OLS, CART, random forest, gradient boosting, metrics and CV
//! * [`explain`] brute-force and tree-path Shapley values
//! * [`pipeline`] configuration, stage orchestration and report emission

// `!(x >= 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accessibility;
pub mod equity;
pub mod error;
pub mod explain;
pub mod geometry;
pub mod integration;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod spatial_index;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
