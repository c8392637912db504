//! End-to-end orchestration. Each stage reads its inputs from the configured
//! files and from earlier stages' artifacts in the output directory, so any
//! stage can be rerun on its own and `run` is exactly the stages in order.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map};

pub use config::{
    validate_config, BinningSection, CorrelationSection, DecaySection, ExplainSection, GridSection, InputPaths,
    ModelSection, RunConfig,
};
pub use manifest::{RunManifest, RunStatus, StageRecord};

use crate::accessibility::{cias_grid, read_assets, AssetIndex, CiasVector};
use crate::equity::score_tracts;
use crate::error::{Error, Result};
use crate::explain::{explain_model, summarize, BackgroundSet};
use crate::geometry::{assign_tract, clip_grid, make_grid, BoundingBox, GridPoint, TractGeometry};
use crate::integration::{
    aggregate_cias_to_tracts, broadcast_to_grid, impute_column_means, join_sources, race_column,
    race_exceeds_total, zscore_fit, FeatureMatrix, SourceTable, TractTable, CIAS_COLUMNS, FEATURES, RACE_GROUPS,
    TARGET,
};
use crate::io::{self, fmt_opt, fmt_sig};
use crate::models::{
    count_parameters, evaluate, grid_search_cv, train_test_split, CvReport, Metrics, ModelDump, ModelFamily,
    ModelSpec, SplitSpec,
};
use crate::rng::SplitMix64;
use crate::spatial_index::Projection;
use crate::stats::correlation_matrix;

pub const GRID_CSV: &str = "grid.csv";
pub const POINTS_CSV: &str = "points_cias.csv";
pub const TRACTS_CSV: &str = "tracts.csv";
pub const TRACTS_SCORED_CSV: &str = "tracts_scored.csv";
pub const TRACTS_GEOJSON: &str = "tracts_scored.geojson";
pub const DATASET_CSV: &str = "dataset.csv";
pub const CORRELATION_CSV: &str = "correlation.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const SHAP_CSV: &str = "shap.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub fn model_file(family: ModelFamily) -> String {
    format!("model_{}.json", family.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Grid,
    Cias,
    Scas,
    Correlate,
    Train,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Grid,
        Stage::Cias,
        Stage::Scas,
        Stage::Correlate,
        Stage::Train,
        Stage::Explain,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Grid => "grid",
            Stage::Cias => "cias",
            Stage::Scas => "scas",
            Stage::Correlate => "correlate",
            Stage::Train => "train",
            Stage::Explain => "explain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Stage(Stage),
    Run,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stage(s) => s.name(),
            Command::Run => "run",
        }
    }

    fn stages(&self) -> Vec<Stage> {
        match self {
            Command::Stage(s) => vec![*s],
            Command::Run => Stage::ALL.to_vec(),
        }
    }
}

/// Output directory: the override, else the config's, else `out` next to
/// the current directory.
pub fn resolve_out_dir(cfg: &RunConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs every stage in order.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    execute(cfg, out_dir, Command::Run)
}

/// Runs a command and writes `manifest.json` whether it succeeds or fails.
pub fn execute(cfg: &RunConfig, out_dir: &Path, command: Command) -> Result<RunManifest> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut ctx = Ctx {
        cfg,
        out: out_dir.to_path_buf(),
        manifest: RunManifest::new(command.name(), cfg.clone()),
    };
    let result = ctx.run(command);
    ctx.manifest.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    match &result {
        Ok(()) => ctx.manifest.status = RunStatus::Ok,
        Err(e) => {
            ctx.manifest.status = RunStatus::Failed;
            ctx.manifest.error = Some(e.to_string());
        }
    }
    io::write_json(&ctx.out.join(MANIFEST_JSON), &ctx.manifest)?;
    result.map(|()| ctx.manifest)
}

struct SplitDataset {
    x: FeatureMatrix,
    y: Vec<f64>,
    train: Vec<usize>,
    test: Vec<usize>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    manifest: RunManifest,
}

impl Ctx<'_> {
    fn run(&mut self, command: Command) -> Result<()> {
        for (name, path) in self.cfg.input_list() {
            let digest = io::sha256_file(path)?;
            self.manifest.input_digests.insert(name.to_string(), digest);
        }
        for stage in command.stages() {
            let t = Instant::now();
            let mut rec = StageRecord {
                stage: stage.name().to_string(),
                ..StageRecord::default()
            };
            let r = match stage {
                Stage::Grid => self.grid(&mut rec),
                Stage::Cias => self.cias(&mut rec),
                Stage::Scas => self.scas(&mut rec),
                Stage::Correlate => self.correlate(&mut rec),
                Stage::Train => self.train(&mut rec),
                Stage::Explain => self.explain(&mut rec),
            };
            rec.elapsed_ms = t.elapsed().as_secs_f64() * 1e3;
            log::info!("stage {} finished in {:.1} ms", stage.name(), rec.elapsed_ms);
            if r.is_ok() {
                self.manifest.stages.push(rec);
            }
            r?;
        }
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.manifest.warnings.push(msg);
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, producer: &'static str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact { path: p, producer })
        }
    }

    fn record_output(&self, rec: &mut StageRecord, name: &str) -> Result<()> {
        rec.outputs.insert(name.to_string(), io::sha256_file(&self.path(name))?);
        Ok(())
    }

    fn write_csv(&self, rec: &mut StageRecord, name: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
        io::write_csv(&self.path(name), &header, rows)?;
        self.record_output(rec, name)
    }

    fn write_json<T: Serialize>(&self, rec: &mut StageRecord, name: &str, value: &T) -> Result<()> {
        io::write_json(&self.path(name), value)?;
        self.record_output(rec, name)
    }

    /// Grid frame: the boundary's bounding box and a projection at its centre.
    fn frame(&self) -> Result<(Vec<crate::geometry::Polygon>, BoundingBox, Projection)> {
        let boundary = io::read_boundary(&self.cfg.inputs.boundary)?;
        let bbox = BoundingBox::around(&boundary).map_err(|e| Error::data(format!("boundary: {e}")))?;
        let proj = Projection::new(bbox.center());
        Ok((boundary, bbox, proj))
    }

    fn tracts(&self) -> Result<Vec<TractGeometry>> {
        io::read_tracts(&self.cfg.inputs.tracts, &self.cfg.tract_id_property)
    }

    fn grid(&mut self, rec: &mut StageRecord) -> Result<()> {
        let (boundary, bbox, proj) = self.frame()?;
        let tracts = self.tracts()?;
        let g = &self.cfg.grid;
        let full = make_grid(&bbox, g.n_lat, g.n_lon)?;
        let mut clipped = clip_grid(&full, &boundary)?;
        clipped.par_iter_mut().for_each(|p| {
            p.tract_id = assign_tract(p.location, &tracts, &proj, g.snap_radius_m).map(str::to_string);
        });
        let assigned = clipped.iter().filter(|p| p.tract_id.is_some()).count();
        let n_lon = g.n_lon;
        let rows = clipped
            .iter()
            .map(|p| {
                vec![
                    (p.row * n_lon + p.col).to_string(),
                    p.row.to_string(),
                    p.col.to_string(),
                    fmt_sig(p.location.lon),
                    fmt_sig(p.location.lat),
                    p.tract_id.clone().unwrap_or_default(),
                ]
            })
            .collect();
        self.write_csv(rec, GRID_CSV, strings(&["point_id", "row", "col", "lon", "lat", "tract_id"]), rows)?;
        count(rec, "grid_points", full.len());
        count(rec, "clipped_points", clipped.len());
        count(rec, "assigned_points", assigned);
        count(rec, "unassigned_points", clipped.len() - assigned);
        count(rec, "tracts", tracts.len());
        Ok(())
    }

    /// Reloads grid.csv, recovering exact coordinates from the grid definition.
    fn load_grid(&self) -> Result<(Projection, Vec<usize>, Vec<GridPoint>)> {
        let path = self.require(GRID_CSV, "grid")?;
        let table = CsvArtifact::read(&path)?;
        let (_, bbox, proj) = self.frame()?;
        let full = make_grid(&bbox, self.cfg.grid.n_lat, self.cfg.grid.n_lon)?;
        let (id_col, tract_col) = (table.col("point_id")?, table.col("tract_id")?);
        let mut ids = Vec::with_capacity(table.rows.len());
        let mut points = Vec::with_capacity(table.rows.len());
        for r in &table.rows {
            let id: usize = r[id_col]
                .parse()
                .map_err(|_| Error::data(format!("{GRID_CSV}: bad point_id {:?}", &r[id_col])))?;
            let mut p = full
                .get(id)
                .cloned()
                .ok_or_else(|| Error::data(format!("{GRID_CSV}: point_id {id} outside the configured grid; rerun `grid`")))?;
            p.tract_id = Some(r[tract_col].to_string()).filter(|t| !t.is_empty());
            ids.push(id);
            points.push(p);
        }
        Ok((proj, ids, points))
    }

    fn cias(&mut self, rec: &mut StageRecord) -> Result<()> {
        let (proj, ids, points) = self.load_grid()?;
        let decay = self.cfg.decay.to_decay_config()?;
        let categories = self.cfg.decay.categories();
        let assets = read_assets(io::open(&self.cfg.inputs.assets)?, &self.cfg.decay.extra_categories)
            .map_err(|e| Error::data(format!("{}: {e}", self.cfg.inputs.assets.display())))?;
        let index = AssetIndex::build(&proj, &categories, &assets, &decay).map_err(|e| Error::data(e.to_string()))?;
        let scores = cias_grid(&points, &proj, &index, &decay)?;
        let mut header = strings(&["point_id", "row", "col", "lon", "lat", "tract_id"]);
        header.extend(categories.iter().map(|c| c.column()));
        header.push("cias_total".into());
        let rows = ids
            .iter()
            .zip(&points)
            .zip(&scores)
            .map(|((id, p), s)| {
                let mut row = vec![
                    id.to_string(),
                    p.row.to_string(),
                    p.col.to_string(),
                    fmt_sig(p.location.lon),
                    fmt_sig(p.location.lat),
                    p.tract_id.clone().unwrap_or_default(),
                ];
                row.extend(s.scores.iter().map(|v| fmt_sig(*v)));
                row.push(fmt_sig(s.composite()));
                row
            })
            .collect();
        self.write_csv(rec, POINTS_CSV, header, rows)?;
        count(rec, "points", points.len());
        for c in &categories {
            count(rec, &format!("assets_{}", c.name()), assets.iter().filter(|a| &a.category == c).count());
        }
        Ok(())
    }

    fn scas(&mut self, rec: &mut StageRecord) -> Result<()> {
        let cfg = self.cfg;
        let path = self.require(POINTS_CSV, "cias")?;
        let points = CsvArtifact::read(&path)?;
        let cias_columns: Vec<String> = cfg.decay.categories().iter().map(|c| c.column()).collect();
        let tract_col = points.col("tract_id")?;
        let score_cols: Vec<usize> = cias_columns.iter().map(|c| points.col(c)).collect::<Result<_>>()?;
        let mut point_scores = Vec::with_capacity(points.rows.len());
        for r in &points.rows {
            let scores = score_cols
                .iter()
                .map(|&i| parse_f64(&r[i], POINTS_CSV))
                .collect::<Result<Vec<_>>>()?;
            point_scores.push((r[tract_col].to_string(), CiasVector { scores }));
        }

        let tracts = self.tracts()?;
        let tract_ids: Vec<String> = tracts.iter().map(|t| t.tract_id.clone()).collect();
        let agg = aggregate_cias_to_tracts(
            point_scores
                .iter()
                .map(|(t, v)| (Some(t.as_str()).filter(|t| !t.is_empty()), v)),
            &tract_ids,
            cias_columns.len(),
            cfg.aggregation,
        );
        if !agg.empty_tracts.is_empty() {
            self.warn(format!(
                "{} tract(s) contain no grid points; their CIAS aggregate is 0: {}",
                agg.empty_tracts.len(),
                agg.empty_tracts.join(", ")
            ));
        }

        let key = &cfg.columns.tract_id;
        let demo = SourceTable::from_csv("demographics", io::open(&cfg.inputs.demographics)?, key, &cfg.columns.demographics())?;
        let health = SourceTable::from_csv("health", io::open(&cfg.inputs.health)?, key, &cfg.columns.health())?;
        let (mut table, report) = join_sources(&tracts, &demo, &health, &agg.per_tract, &cias_columns)?;
        for (source, missing) in &report.missing_from {
            if *missing > 0 {
                self.warn(format!("{missing} tract(s) absent from {source}; dropped by the inner join"));
            }
        }
        for (g, over) in race_exceeds_total(&table) {
            self.warn(format!("{over} tract(s) report more pop_{g} than total_population"));
        }
        if table.is_empty() {
            return Err(Error::data("no tract is present in every source"));
        }
        let imputed = impute_column_means(&mut table)?;

        let mut header = vec!["tract_id".to_string()];
        header.extend(table.columns.iter().map(|c| c.name.clone()));
        let rows = (0..table.len())
            .map(|i| {
                let mut row = vec![table.tract_ids[i].clone()];
                row.extend(table.columns.iter().map(|c| fmt_opt(c.values[i])));
                row
            })
            .collect();
        self.write_csv(rec, TRACTS_CSV, header, rows)?;

        let spec = cfg.binning_spec()?;
        let records = score_tracts(&table, &cias_columns, &spec)?;
        let mut header = strings(&["tract_id", "scas_total"]);
        header.extend(RACE_GROUPS.iter().map(|g| format!("scas_{g}")));
        header.extend(strings(&["bin", "label"]));
        let rows = records
            .iter()
            .map(|r| {
                let mut row = vec![r.tract_id.clone(), fmt_opt(r.scas_total)];
                row.extend(RACE_GROUPS.iter().map(|g| fmt_opt(r.scas_by_group[*g])));
                row.push(r.bin.map(|b| b.to_string()).unwrap_or_default());
                row.push(r.label.map(|l| l.to_string()).unwrap_or_default());
                row
            })
            .collect();
        self.write_csv(rec, TRACTS_SCORED_CSV, header, rows)?;

        let by_id: BTreeMap<&str, &TractGeometry> = tracts.iter().map(|t| (t.tract_id.as_str(), t)).collect();
        let features = records
            .iter()
            .map(|r| {
                let mut props = Map::new();
                props.insert("tract_id".into(), json!(r.tract_id));
                props.insert("scas_total".into(), json!(r.scas_total));
                for g in RACE_GROUPS {
                    props.insert(format!("scas_{g}"), json!(r.scas_by_group[g]));
                }
                props.insert("bin".into(), json!(r.bin));
                props.insert("label".into(), json!(r.label));
                io::feature_json(&by_id[r.tract_id.as_str()].shape, props)
            })
            .collect();
        self.write_json(rec, TRACTS_GEOJSON, &io::feature_collection(features))?;

        let (_, ids, grid_points) = self.load_grid()?;
        let dataset = broadcast_to_grid(&table, &grid_points)?;
        let kept_ids = ids
            .iter()
            .zip(&grid_points)
            .filter(|(_, p)| p.tract_id.as_deref().and_then(|t| table.row_index(t)).is_some())
            .map(|(id, _)| *id);
        let mut header = strings(&["point_id", "tract_id"]);
        header.extend(strings(&FEATURES));
        header.push(TARGET.to_string());
        let x = &dataset.features;
        let rows = kept_ids
            .enumerate()
            .map(|(i, id)| {
                let mut row = vec![id.to_string(), x.row_keys[i].clone()];
                row.extend(x.row(i).iter().map(|v| fmt_sig(*v)));
                row.push(fmt_sig(dataset.target[i]));
                row
            })
            .collect();
        self.write_csv(rec, DATASET_CSV, header, rows)?;

        count(rec, "points", point_scores.len());
        count(rec, "dropped_points", agg.dropped_points);
        count(rec, "tract_geometries", tracts.len());
        count(rec, "union_tracts", report.union_keys);
        count(rec, "joined_tracts", report.joined);
        count(rec, "unmatched_tracts", report.unmatched());
        for (source, missing) in &report.missing_from {
            count(rec, &format!("missing_from_{source}"), *missing);
        }
        for (column, n) in &imputed {
            count(rec, &format!("imputed_{column}"), *n);
        }
        count(rec, "no_data_tracts", records.iter().filter(|r| r.scas_total.is_none()).count());
        count(rec, "dataset_rows", x.n_rows());
        count(rec, "dataset_excluded_points", dataset.excluded_points);
        Ok(())
    }

    fn correlate(&mut self, rec: &mut StageRecord) -> Result<()> {
        let path = self.require(TRACTS_CSV, "scas")?;
        let table = TractTable::from_csv(io::open(&path)?)?;
        let mut names: Vec<String> = strings(&CIAS_COLUMNS);
        names.extend(strings(&["total_population", "population_density", "depression_pct"]));
        names.extend(RACE_GROUPS.iter().map(|g| race_column(g)));
        names.push(TARGET.to_string());
        let columns = names
            .iter()
            .map(|n| table.require(n).map(<[_]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let m = correlation_matrix(&names, &columns, self.cfg.correlation.race_as_shares)?;
        let undefined = m.values.iter().filter(|v| v.is_none()).count();
        let mut header = vec!["variable".to_string()];
        header.extend(names.iter().cloned());
        let rows = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let mut row = vec![n.clone()];
                row.extend((0..names.len()).map(|j| fmt_opt(m.get(i, j))));
                row
            })
            .collect();
        self.write_csv(rec, CORRELATION_CSV, header, rows)?;
        count(rec, "tracts", table.len());
        count(rec, "variables", names.len());
        count(rec, "undefined_pairs", undefined);
        Ok(())
    }

    /// Loads dataset.csv and reproduces the seeded train/test split.
    fn load_dataset(&self, consumer: &str) -> Result<SplitDataset> {
        let path = self.require(DATASET_CSV, "scas")?;
        let table = CsvArtifact::read(&path)?;
        let id_col = table.col("point_id")?;
        let cols: Vec<usize> = FEATURES.iter().map(|f| table.col(f)).collect::<Result<_>>()?;
        let y_col = table.col(TARGET)?;
        let mut keys = Vec::new();
        let mut data = Vec::new();
        let mut y = Vec::new();
        for r in &table.rows {
            keys.push(r[id_col].to_string());
            for &c in &cols {
                data.push(parse_f64(&r[c], DATASET_CSV)?);
            }
            y.push(parse_f64(&r[y_col], DATASET_CSV)?);
        }
        let x = FeatureMatrix::new(keys, strings(&FEATURES), data)?;
        let spec = SplitSpec {
            train_fraction: self.cfg.model.train_fraction,
            seed: self.cfg.seed,
        };
        let (train, test) = train_test_split(x.n_rows(), &spec)
            .map_err(|e| Error::data(format!("{consumer}: {DATASET_CSV}: {e}")))?;
        Ok(SplitDataset { x, y, train, test })
    }

    fn train(&mut self, rec: &mut StageRecord) -> Result<()> {
        let SplitDataset { x, y, train, test } = self.load_dataset("train")?;
        let mut xtr = x.select_rows(&train);
        let stats = (0..x.n_cols())
            .map(|j| zscore_fit(&xtr.column(j)))
            .collect::<Result<Vec<_>>>()?;
        for (name, s) in x.names.iter().zip(&stats) {
            if s.std == 0.0 {
                self.warn(format!("feature {name} is constant on the training split; normalized to 0"));
            }
        }
        xtr.normalize_with(stats.clone())?;
        let mut xte = x.select_rows(&test);
        xte.normalize_with(stats.clone())?;
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();

        let seed = self.cfg.seed;
        let mut reports = Vec::new();
        for &family in &self.cfg.model.families {
            let candidates = self.cfg.model.candidates(family);
            let cv = if candidates.len() > 1 {
                Some(grid_search_cv(&candidates, self.cfg.model.cv_folds, seed, &xtr, &ytr)?)
            } else {
                None
            };
            let spec = cv.as_ref().map_or(&candidates[0], CvReport::best_spec).clone();
            let model = spec.fit(&xtr, &ytr, seed)?;
            let train_metrics = evaluate(&ytr, &model.predict(&xtr))?;
            let test_metrics = evaluate(&yte, &model.predict(&xte))?;
            let n_parameters = count_parameters(&model);
            let dump = ModelDump::new(x.names.clone(), Some(stats.clone()), model);
            self.write_json(rec, &model_file(family), &dump)?;
            reports.push(ModelReport {
                family,
                spec,
                n_parameters,
                train: train_metrics,
                test: test_metrics,
                cv,
            });
        }
        let report = MetricsReport {
            seed,
            n_rows: x.n_rows(),
            n_train: train.len(),
            n_test: test.len(),
            models: reports,
        };
        self.write_json(rec, METRICS_JSON, &report)?;
        count(rec, "rows", x.n_rows());
        count(rec, "train_rows", train.len());
        count(rec, "test_rows", test.len());
        Ok(())
    }

    fn explain(&mut self, rec: &mut StageRecord) -> Result<()> {
        let SplitDataset { x, train, test, .. } = self.load_dataset("explain")?;
        let family = self.cfg.explain.model;
        let name = model_file(family);
        let path = self.require(&name, "train")?;
        let dump = ModelDump::from_json(&io::read_to_string(&path)?)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if dump.feature_names != x.names {
            return Err(Error::data(format!("{name} was trained on different features; rerun `train`")));
        }
        let mut xn = x.clone();
        if let Some(stats) = dump.feature_stats.clone() {
            xn.normalize_with(stats)?;
        }

        let mut bg_idx = train.clone();
        if let Some(b) = self.cfg.explain.background_size {
            if b < bg_idx.len() {
                SplitMix64::new(self.cfg.seed).shuffle(&mut bg_idx);
                bg_idx.truncate(b);
            }
        }
        let bg = BackgroundSet::new(bg_idx.iter().map(|&i| xn.row(i).to_vec()).collect())?;
        let rows: Vec<usize> = match self.cfg.explain.max_rows {
            Some(m) => test.iter().copied().take(m).collect(),
            None => test.clone(),
        };
        let model = &dump.model;
        let explanations = rows
            .par_iter()
            .map(|&i| explain_model(model, xn.row(i), &bg))
            .collect::<Result<Vec<_>>>()?;
        for (&i, e) in rows.iter().zip(&explanations) {
            let f = model.predict_row(xn.row(i));
            if (e.total() - f).abs() > 1e-8 * f.abs().max(1.0) {
                return Err(Error::Invariant(format!(
                    "local accuracy failed for point {}: base + sum(phi) = {}, model = {f}",
                    x.row_keys[i],
                    e.total()
                )));
            }
        }

        let mut header = strings(&["point_id", "base_value"]);
        header.extend(x.names.iter().cloned());
        let shap_rows = rows
            .iter()
            .zip(&explanations)
            .map(|(&i, e)| {
                let mut row = vec![x.row_keys[i].clone(), fmt_sig(e.base_value)];
                row.extend(e.contributions.iter().map(|v| fmt_sig(*v)));
                row
            })
            .collect();
        self.write_csv(rec, SHAP_CSV, header, shap_rows)?;

        let summary = summarize(&explanations)?;
        let rows = summary
            .order
            .iter()
            .map(|&j| {
                vec![
                    x.names[j].clone(),
                    fmt_sig(summary.mean_abs[j]),
                    summary.rank[j].to_string(),
                    fmt_sig(summary.positive_fraction[j]),
                ]
            })
            .collect();
        self.write_csv(rec, SUMMARY_CSV, strings(&["feature", "mean_abs_shap", "rank", "positive_fraction"]), rows)?;
        count(rec, "explained_rows", explanations.len());
        count(rec, "background_rows", bg.len());
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ModelReport {
    family: ModelFamily,
    spec: ModelSpec,
    n_parameters: usize,
    train: Metrics,
    test: Metrics,
    cv: Option<CvReport>,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    seed: u64,
    n_rows: usize,
    n_train: usize,
    n_test: usize,
    models: Vec<ModelReport>,
}

fn count(rec: &mut StageRecord, key: &str, n: usize) {
    rec.counts.insert(key.to_string(), n as u64);
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn parse_f64(cell: &str, file: &str) -> Result<f64> {
    cell.parse()
        .map_err(|_| Error::data(format!("{file}: cannot parse {cell:?} as a number")))
}

/// A stage artifact read back as strings.
struct CsvArtifact {
    name: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl CsvArtifact {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(io::open(path)?);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<std::result::Result<_, _>>()?;
        Ok(CsvArtifact {
            name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("{} has no column {name:?}", self.name)))
    }
}
