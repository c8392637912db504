//! Run configuration: JSON, unknown keys rejected, defaults filled, paths
//! resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accessibility::{AssetCategory, DecayConfig, DEFAULT_ALPHA};
use crate::equity::BinningSpec;
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_SNAP_RADIUS_M;
use crate::integration::{AggregationMode, ColumnMapping};
use crate::models::{ForestParams, GbmParams, ModelFamily, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub boundary: PathBuf,
    pub tracts: PathBuf,
    pub assets: PathBuf,
    pub demographics: PathBuf,
    pub health: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_lat: usize,
    pub n_lon: usize,
    /// Points outside every tract snap to the nearest centroid within this distance.
    pub snap_radius_m: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n_lat: 500,
            n_lon: 500,
            snap_radius_m: DEFAULT_SNAP_RADIUS_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub alpha: f64,
    pub epsilon: f64,
    /// Category name → weight; unlisted categories use the per-asset weight.
    pub weights: BTreeMap<String, f64>,
    /// Additional category names accepted in the assets file.
    pub extra_categories: Vec<String>,
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection {
            alpha: DEFAULT_ALPHA,
            epsilon: 0.0,
            weights: BTreeMap::new(),
            extra_categories: Vec::new(),
        }
    }
}

impl DecaySection {
    pub fn categories(&self) -> Vec<AssetCategory> {
        let mut c = AssetCategory::BUILTIN.to_vec();
        c.extend(self.extra_categories.iter().cloned().map(AssetCategory::Extra));
        c
    }

    pub fn to_decay_config(&self) -> Result<DecayConfig> {
        let mut weights_override = BTreeMap::new();
        for (name, w) in &self.weights {
            let cat = AssetCategory::parse(name, &self.extra_categories).map_err(|e| Error::Config(format!("decay.weights: {e}")))?;
            weights_override.insert(cat, *w);
        }
        let cfg = DecayConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            weights_override,
        };
        cfg.validate().map_err(|e| Error::Config(format!("decay: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningSection {
    pub q: u32,
    pub low_upto: Option<u32>,
    pub high_from: Option<u32>,
}

impl Default for BinningSection {
    fn default() -> Self {
        BinningSection {
            q: 20,
            low_upto: None,
            high_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSection {
    /// Convert race counts to percent of total population before correlating.
    pub race_as_shares: bool,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        CorrelationSection { race_as_shares: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub families: Vec<ModelFamily>,
    /// Candidate hyperparameters per family; more than one triggers
    /// grid-search cross-validation on the training split.
    pub grid: BTreeMap<ModelFamily, Vec<ModelSpec>>,
    pub train_fraction: f64,
    pub cv_folds: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            families: ModelFamily::ALL.to_vec(),
            grid: BTreeMap::new(),
            train_fraction: 0.8,
            cv_folds: 5,
        }
    }
}

impl ModelSection {
    pub fn candidates(&self, family: ModelFamily) -> Vec<ModelSpec> {
        match self.grid.get(&family) {
            Some(g) if !g.is_empty() => g.clone(),
            _ => vec![match family {
                ModelFamily::LinearRegression => ModelSpec::LinearRegression,
                ModelFamily::RandomForest => ModelSpec::RandomForest(ForestParams::default()),
                ModelFamily::GradientBoosting => ModelSpec::GradientBoosting(GbmParams::default()),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub model: ModelFamily,
    /// Background rows sampled from the training split; `null` uses all of it.
    pub background_size: Option<usize>,
    /// Test rows explained, in split order; `null` explains the whole test split.
    pub max_rows: Option<usize>,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            model: ModelFamily::RandomForest,
            background_size: Some(100),
            max_rows: Some(1000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    /// Seed for every random choice in the run; required.
    pub seed: u64,
    #[serde(default = "default_id_property")]
    pub tract_id_property: String,
    #[serde(default)]
    pub columns: ColumnMapping,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub aggregation: AggregationMode,
    #[serde(default)]
    pub binning: BinningSection,
    #[serde(default)]
    pub correlation: CorrelationSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_id_property() -> String {
    "GEOID".into()
}

impl RunConfig {
    pub fn binning_spec(&self) -> Result<BinningSpec> {
        BinningSpec::with_thresholds(self.binning.q, self.binning.low_upto, self.binning.high_from)
            .map_err(|e| Error::Config(format!("binning: {e}")))
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid.n_lat < 2 || self.grid.n_lon < 2 {
            return bad(format!("grid: need at least 2x2 points, got {}x{}", self.grid.n_lat, self.grid.n_lon));
        }
        if !(self.grid.snap_radius_m >= 0.0) {
            return bad(format!("grid.snap_radius_m must be >= 0, got {}", self.grid.snap_radius_m));
        }
        self.decay.to_decay_config()?;
        self.binning_spec()?;
        let f = self.model.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!("model.train_fraction must lie in (0, 1), got {f}"));
        }
        if self.model.cv_folds < 2 {
            return bad(format!("model.cv_folds must be >= 2, got {}", self.model.cv_folds));
        }
        if self.model.families.is_empty() {
            return bad("model.families is empty".into());
        }
        for (family, specs) in &self.model.grid {
            if let Some(s) = specs.iter().find(|s| s.family() != *family) {
                return bad(format!("model.grid.{}: candidate of family {}", family.name(), s.family().name()));
            }
        }
        if !self.model.families.contains(&self.explain.model) {
            return bad(format!("explain.model {} is not among model.families", self.explain.model.name()));
        }
        if self.explain.background_size == Some(0) || self.explain.max_rows == Some(0) {
            return bad("explain sizes must be positive".into());
        }
        for (name, p) in self.input_list() {
            if !p.is_file() {
                return bad(format!("inputs.{name}: file not found: {}", p.display()));
            }
        }
        Ok(())
    }

    pub fn input_list(&self) -> [(&'static str, &Path); 5] {
        let i = &self.inputs;
        [
            ("boundary", &i.boundary),
            ("tracts", &i.tracts),
            ("assets", &i.assets),
            ("demographics", &i.demographics),
            ("health", &i.health),
        ]
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.boundary);
        fix(&mut self.inputs.tracts);
        fix(&mut self.inputs.assets);
        fix(&mut self.inputs.demographics);
        fix(&mut self.inputs.health);
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    /// Parses config text; relative paths are taken relative to `base`.
    pub fn from_str_at(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve(base);
        cfg.check()?;
        Ok(cfg)
    }
}

/// Reads, schema-checks and validates a config file.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::from_str_at(&text, base).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with_inputs() -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        for f in ["b.geojson", "t.geojson", "a.csv", "d.csv", "h.csv"] {
            std::fs::write(d.path().join(f), "").unwrap();
        }
        d
    }

    const MINIMAL: &str = r#"{
        "seed": 7,
        "inputs": {"boundary": "b.geojson", "tracts": "t.geojson", "assets": "a.csv",
                   "demographics": "d.csv", "health": "h.csv"}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let d = dir_with_inputs();
        let cfg = RunConfig::from_str_at(MINIMAL, d.path()).unwrap();
        assert_eq!(cfg.decay.alpha, 0.0005);
        assert!(cfg.decay.weights.is_empty());
        assert_eq!(cfg.binning.q, 20);
        assert_eq!(cfg.model.train_fraction, 0.8);
        assert_eq!((cfg.grid.n_lat, cfg.grid.n_lon), (500, 500));
        assert_eq!(cfg.grid.snap_radius_m, 250.0);
        assert_eq!(cfg.inputs.assets, d.path().join("a.csv"));
        let spec = cfg.binning_spec().unwrap();
        assert_eq!((spec.low_upto, spec.high_from), (6, 15));
    }

    #[test]
    fn unknown_key_is_named() {
        let d = dir_with_inputs();
        let text = MINIMAL.replace("\"seed\": 7,", "\"seed\": 7, \"decay\": {\"alhpa\": 0.001},");
        let err = RunConfig::from_str_at(&text, d.path()).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("alhpa") && m.contains("line")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_bad_values() {
        let d = dir_with_inputs();
        for bad in [
            "\"decay\": {\"alpha\": 0}",
            "\"decay\": {\"alpha\": -1}",
            "\"binning\": {\"q\": 2}",
            "\"model\": {\"train_fraction\": 1.0}",
            "\"explain\": {\"model\": \"random_forest\"}, \"model\": {\"families\": [\"linear_regression\"]}",
        ] {
            let text = MINIMAL.replace("\"seed\": 7,", &format!("\"seed\": 7, {bad},"));
            assert!(matches!(RunConfig::from_str_at(&text, d.path()), Err(Error::Config(_))), "{bad}");
        }
        let no_seed = MINIMAL.replace("\"seed\": 7,", "");
        assert!(matches!(RunConfig::from_str_at(&no_seed, d.path()), Err(Error::Config(m)) if m.contains("seed")));
        std::fs::remove_file(d.path().join("h.csv")).unwrap();
        assert!(matches!(RunConfig::from_str_at(MINIMAL, d.path()), Err(Error::Config(m)) if m.contains("health")));
    }

    #[test]
    fn model_grid_parses() {
        let d = dir_with_inputs();
        let text = MINIMAL.replace(
            "\"seed\": 7,",
            r#""seed": 7, "model": {"grid": {"random_forest": [
                {"family": "random_forest", "params": {"n_trees": 10, "max_depth": 4}},
                {"family": "random_forest", "params": {"n_trees": 10}}]}},"#,
        );
        let cfg = RunConfig::from_str_at(&text, d.path()).unwrap();
        assert_eq!(cfg.model.candidates(ModelFamily::RandomForest).len(), 2);
        assert_eq!(cfg.model.candidates(ModelFamily::LinearRegression), vec![ModelSpec::LinearRegression]);
    }
}
