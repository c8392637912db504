//! Cultural infrastructure accessibility scores.
//!
//! For a grid point `p` and the assets `j` of one category,
//! `S(p) = Σ w_j · exp(−α · d_pj)` with `d` in metres and `α` per metre.
//! Every sum runs in ascending (distance, input order) so results do not
//! depend on evaluation order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, GridPoint};
use crate::spatial_index::{KdTree, Neighbor, Projection};

/// Decay rate per metre used by default (2 km e-folding length).
pub const DEFAULT_ALPHA: f64 = 0.0005;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AssetCategory {
    Library,
    Museum,
    ArtGallery,
    Theater,
    /// Declared in configuration.
    Extra(String),
}

impl AssetCategory {
    /// Built-in categories in feature-layout order.
    pub const BUILTIN: [AssetCategory; 4] = [
        AssetCategory::ArtGallery,
        AssetCategory::Theater,
        AssetCategory::Library,
        AssetCategory::Museum,
    ];

    pub fn name(&self) -> &str {
        match self {
            AssetCategory::Library => "library",
            AssetCategory::Museum => "museum",
            AssetCategory::ArtGallery => "art_gallery",
            AssetCategory::Theater => "theater",
            AssetCategory::Extra(s) => s,
        }
    }

    /// Column name of the category's score, e.g. `cias_gallery`.
    pub fn column(&self) -> String {
        match self {
            AssetCategory::ArtGallery => "cias_gallery".to_string(),
            other => format!("cias_{}", other.name()),
        }
    }

    /// Parses a category, accepting config-declared extras.
    pub fn parse(s: &str, extras: &[String]) -> Result<Self> {
        match s.trim() {
            "library" => Ok(AssetCategory::Library),
            "museum" => Ok(AssetCategory::Museum),
            "art_gallery" => Ok(AssetCategory::ArtGallery),
            "theater" => Ok(AssetCategory::Theater),
            other if extras.iter().any(|e| e == other) => Ok(AssetCategory::Extra(other.to_string())),
            other => Err(Error::data(format!("unknown asset category {other:?}"))),
        }
    }
}

impl fmt::Display for AssetCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<AssetCategory> for String {
    fn from(c: AssetCategory) -> String {
        c.name().to_string()
    }
}

impl TryFrom<String> for AssetCategory {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        match AssetCategory::parse(&s, &[]) {
            Ok(c) => Ok(c),
            Err(_) if !s.trim().is_empty() => Ok(AssetCategory::Extra(s)),
            Err(e) => Err(e),
        }
    }
}

impl FromStr for AssetCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AssetCategory::parse(s, &[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetRecord {
    pub id: String,
    pub category: AssetCategory,
    pub location: GeoPoint,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig {
    pub alpha: f64,
    /// Per-term truncation bound; 0 means exact summation.
    pub epsilon: f64,
    pub weights_override: BTreeMap<AssetCategory, f64>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            alpha: DEFAULT_ALPHA,
            epsilon: 0.0,
            weights_override: BTreeMap::new(),
        }
    }
}

impl DecayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if let Some((c, w)) = self.weights_override.iter().find(|(_, w)| !(**w >= 0.0)) {
            return Err(Error::invalid(format!("weight for {c} must be >= 0, got {w}")));
        }
        Ok(())
    }

    pub fn weight_of(&self, asset: &AssetRecord) -> f64 {
        self.weights_override
            .get(&asset.category)
            .copied()
            .unwrap_or(asset.weight)
    }

    /// Radius beyond which every term is at most `epsilon`.
    pub fn cutoff_radius(&self, w_max: f64) -> f64 {
        if self.epsilon == 0.0 {
            return f64::INFINITY;
        }
        (w_max / self.epsilon).ln().max(0.0) / self.alpha
    }
}

/// Per-category scores of one grid point, aligned with a category list.
#[derive(Debug, Clone, PartialEq)]
pub struct CiasVector {
    pub scores: Vec<f64>,
}

impl CiasVector {
    pub fn composite(&self) -> f64 {
        self.scores.iter().sum()
    }
}

pub fn distance_m(proj: &Projection, a: GeoPoint, b: GeoPoint) -> f64 {
    proj.distance_m(a, b)
}

/// Exact decay score of `p` against one category's assets.
pub fn cias_point(proj: &Projection, p: GeoPoint, assets: &[AssetRecord], cfg: &DecayConfig) -> Result<f64> {
    cfg.validate()?;
    let mut terms = Vec::with_capacity(assets.len());
    for (order, a) in assets.iter().enumerate() {
        let w = cfg.weight_of(a);
        if !(w >= 0.0) {
            return Err(Error::invalid(format!("asset {} has negative weight {w}", a.id)));
        }
        terms.push((proj.distance_m(p, a.location), order, w));
    }
    terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(terms.iter().map(|&(d, _, w)| w * (-cfg.alpha * d).exp()).sum())
}

/// KD-tree index over one category's assets.
#[derive(Debug, Clone)]
pub struct CategoryIndex {
    pub category: AssetCategory,
    tree: Option<KdTree>,
    weights: Vec<f64>,
    w_max: f64,
}

impl CategoryIndex {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Per-category KD-trees built under one projection.
#[derive(Debug, Clone)]
pub struct AssetIndex {
    projection: Projection,
    categories: Vec<CategoryIndex>,
}

impl AssetIndex {
    /// Builds one tree per category in `categories` order. Categories with
    /// no assets get an empty index and score 0 everywhere.
    pub fn build(
        proj: &Projection,
        categories: &[AssetCategory],
        assets: &[AssetRecord],
        cfg: &DecayConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut out = Vec::with_capacity(categories.len());
        for cat in categories {
            let members: Vec<&AssetRecord> = assets.iter().filter(|a| &a.category == cat).collect();
            let mut points = Vec::with_capacity(members.len());
            let mut weights = Vec::with_capacity(members.len());
            for (i, a) in members.iter().enumerate() {
                let w = cfg.weight_of(a);
                if !(w >= 0.0) {
                    return Err(Error::invalid(format!("asset {} has negative weight {w}", a.id)));
                }
                points.push(proj.project(a.location, i)?);
                weights.push(w);
            }
            let tree = if points.is_empty() {
                None
            } else {
                Some(KdTree::build(&points)?)
            };
            let w_max = weights.iter().copied().fold(0.0, f64::max);
            out.push(CategoryIndex {
                category: cat.clone(),
                tree,
                weights,
                w_max,
            });
        }
        Ok(AssetIndex {
            projection: *proj,
            categories: out,
        })
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategoryIndex> {
        self.categories.iter()
    }
}

/// Scores every grid point for every indexed category.
///
/// With `epsilon = 0` the result equals [`cias_point`] bit for bit. With
/// `epsilon > 0` only assets within `ln(w_max/ε)/α` contribute, so each
/// score is low by at most `N_category · ε`.
pub fn cias_grid(
    grid: &[GridPoint],
    grid_projection: &Projection,
    index: &AssetIndex,
    cfg: &DecayConfig,
) -> Result<Vec<CiasVector>> {
    cfg.validate()?;
    if grid_projection != index.projection() {
        return Err(Error::invalid(
            "grid and asset index were projected from different origins",
        ));
    }
    let proj = index.projection;
    grid.par_iter()
        .map(|g| {
            let q = proj.project(g.location, 0)?;
            let scores = index
                .categories
                .iter()
                .map(|ci| {
                    let Some(tree) = &ci.tree else { return 0.0 };
                    let hits: Vec<Neighbor> = if cfg.epsilon == 0.0 {
                        tree.nearest_k(&q, tree.len())
                    } else {
                        tree.within_radius(&q, cfg.cutoff_radius(ci.w_max))
                    };
                    hits.iter()
                        .map(|n| ci.weights[n.source_id] * (-cfg.alpha * n.distance).exp())
                        .sum()
                })
                .collect();
            Ok(CiasVector { scores })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct AssetRow {
    id: String,
    category: String,
    lon: f64,
    lat: f64,
    #[serde(default)]
    weight: Option<f64>,
}

/// Reads assets from CSV with header `id, category, lon, lat[, weight]`.
pub fn read_assets<R: Read>(reader: R, extra_categories: &[String]) -> Result<Vec<AssetRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<AssetRow>().enumerate() {
        let row = row?;
        let category = AssetCategory::parse(&row.category, extra_categories)
            .map_err(|e| Error::data(format!("assets row {}: {e}", line + 2)))?;
        let location = GeoPoint::new(row.lon, row.lat)
            .map_err(|e| Error::data(format!("assets row {}: {e}", line + 2)))?;
        let weight = row.weight.unwrap_or(1.0);
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::data(format!(
                "assets row {}: weight must be a finite value >= 0, got {weight}",
                line + 2
            )));
        }
        out.push(AssetRecord {
            id: row.id,
            category,
            location,
            weight,
        });
    }
    Ok(out)
}
