//! Tract-level data integration: CIAS aggregation, source joins, mean
//! imputation, z-score normalization and the broadcast grid dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::accessibility::CiasVector;
use crate::error::{Error, Result};
use crate::geometry::{GridPoint, TractGeometry};

/// Race/ethnicity groups in layout order.
pub const RACE_GROUPS: [&str; 7] = ["white", "black", "native", "asian", "nhpi", "other", "multiracial"];

pub const CIAS_COLUMNS: [&str; 4] = ["cias_gallery", "cias_theater", "cias_library", "cias_museum"];

/// The 16-feature grid layout.
pub const FEATURES: [&str; 16] = [
    "lon",
    "lat",
    "cias_gallery",
    "cias_theater",
    "cias_library",
    "cias_museum",
    "total_population",
    "population_density",
    "depression_pct",
    "pop_white",
    "pop_black",
    "pop_native",
    "pop_asian",
    "pop_nhpi",
    "pop_other",
    "pop_multiracial",
];

pub const TARGET: &str = "median_income";

pub fn race_column(group: &str) -> String {
    format!("pop_{group}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CiasAggregates {
    /// Per tract, one aggregate per category (same order as the input vectors).
    pub per_tract: BTreeMap<String, Vec<f64>>,
    pub member_counts: BTreeMap<String, usize>,
    pub dropped_points: usize,
    pub empty_tracts: Vec<String>,
}

/// Aggregates point scores per tract. Points without a tract are dropped
/// and counted; tracts without points get 0.
pub fn aggregate_cias_to_tracts<'a>(
    points: impl IntoIterator<Item = (Option<&'a str>, &'a CiasVector)>,
    tract_ids: &[String],
    n_categories: usize,
    mode: AggregationMode,
) -> CiasAggregates {
    let mut per_tract: BTreeMap<String, Vec<f64>> =
        tract_ids.iter().map(|t| (t.clone(), vec![0.0; n_categories])).collect();
    let mut counts: BTreeMap<String, usize> = tract_ids.iter().map(|t| (t.clone(), 0)).collect();
    let mut dropped = 0;
    for (tract, cias) in points {
        match tract.and_then(|t| per_tract.get_mut(t).map(|acc| (t, acc))) {
            Some((t, acc)) => {
                for (a, s) in acc.iter_mut().zip(&cias.scores) {
                    *a += s;
                }
                *counts.get_mut(t).expect("count exists for every tract") += 1;
            }
            None => dropped += 1,
        }
    }
    let mut empty = Vec::new();
    for (t, acc) in per_tract.iter_mut() {
        let n = counts[t];
        if n == 0 {
            empty.push(t.clone());
        } else if mode == AggregationMode::Mean {
            for a in acc.iter_mut() {
                *a /= n as f64;
            }
        }
    }
    if !empty.is_empty() {
        log::warn!("{} tract(s) contain no grid points; their CIAS aggregate is 0", empty.len());
    }
    CiasAggregates {
        per_tract,
        member_counts: counts,
        dropped_points: dropped,
        empty_tracts: empty,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

/// Column-oriented table keyed by tract id, rows sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct TractTable {
    pub tract_ids: Vec<String>,
    pub columns: Vec<Column>,
}

impl TractTable {
    pub fn len(&self) -> usize {
        self.tract_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tract_ids.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Vec<Option<f64>>> {
        self.columns.iter_mut().find(|c| c.name == name).map(|c| &mut c.values)
    }

    pub fn require(&self, name: &str) -> Result<&[Option<f64>]> {
        self.column(name)
            .ok_or_else(|| Error::data(format!("tract table has no column {name:?}")))
    }

    pub fn row_index(&self, tract_id: &str) -> Option<usize> {
        self.tract_ids.binary_search_by(|t| t.as_str().cmp(tract_id)).ok()
    }

    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c[row])
    }

    /// Reads a table written by [`crate::io::write_tract_table`].
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("tract_id") {
            return Err(Error::data("tract table must start with a tract_id column"));
        }
        let mut ids = Vec::new();
        let mut columns: Vec<Column> = headers
            .iter()
            .skip(1)
            .map(|h| Column {
                name: h.to_string(),
                values: Vec::new(),
            })
            .collect();
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            for (col, cell) in columns.iter_mut().zip(rec.iter().skip(1)) {
                col.values.push(parse_cell(cell, &col.name)?);
            }
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != ids {
            return Err(Error::data("tract table rows must have unique, sorted tract ids"));
        }
        Ok(TractTable {
            tract_ids: ids,
            columns,
        })
    }
}

fn parse_cell(cell: &str, column: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::data(format!("column {column:?}: cannot parse {cell:?} as a number")))
}

/// CSV header names for every canonical input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub tract_id: String,
    pub total_population: String,
    pub population_density: String,
    pub median_income: String,
    pub depression_pct: String,
    pub pop_white: String,
    pub pop_black: String,
    pub pop_native: String,
    pub pop_asian: String,
    pub pop_nhpi: String,
    pub pop_other: String,
    pub pop_multiracial: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            tract_id: "GEOID".into(),
            total_population: "total_population".into(),
            population_density: "population_density".into(),
            median_income: "median_income".into(),
            depression_pct: "depression_pct".into(),
            pop_white: "pop_white".into(),
            pop_black: "pop_black".into(),
            pop_native: "pop_native".into(),
            pop_asian: "pop_asian".into(),
            pop_nhpi: "pop_nhpi".into(),
            pop_other: "pop_other".into(),
            pop_multiracial: "pop_multiracial".into(),
        }
    }
}

impl ColumnMapping {
    /// (canonical, header) pairs expected in the demographics CSV.
    pub fn demographics(&self) -> Vec<(&'static str, &str)> {
        vec![
            ("total_population", self.total_population.as_str()),
            ("population_density", self.population_density.as_str()),
            ("median_income", self.median_income.as_str()),
            ("pop_white", self.pop_white.as_str()),
            ("pop_black", self.pop_black.as_str()),
            ("pop_native", self.pop_native.as_str()),
            ("pop_asian", self.pop_asian.as_str()),
            ("pop_nhpi", self.pop_nhpi.as_str()),
            ("pop_other", self.pop_other.as_str()),
            ("pop_multiracial", self.pop_multiracial.as_str()),
        ]
    }

    pub fn health(&self) -> Vec<(&'static str, &str)> {
        vec![("depression_pct", self.depression_pct.as_str())]
    }
}

/// One keyed input source (demographics or health).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

impl SourceTable {
    /// Reads the key column plus the mapped columns; other columns are ignored.
    pub fn from_csv<R: Read>(
        name: &str,
        reader: R,
        key_header: &str,
        wanted: &[(&'static str, &str)],
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |h: &str| {
            headers
                .iter()
                .position(|x| x == h)
                .ok_or_else(|| Error::data(format!("{name} CSV has no column {h:?}")))
        };
        let key_idx = find(key_header)?;
        let idx: Vec<usize> = wanted.iter().map(|(_, h)| find(h)).collect::<Result<_>>()?;
        let mut rows = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let key = rec.get(key_idx).unwrap_or("").to_string();
            if key.is_empty() {
                return Err(Error::data(format!("{name} CSV row {}: empty tract id", line + 2)));
            }
            let values = idx
                .iter()
                .zip(wanted)
                .map(|(&i, (canon, _))| parse_cell(rec.get(i).unwrap_or(""), canon))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::data(format!("{name} CSV row {}: {e}", line + 2)))?;
            if rows.insert(key.clone(), values).is_some() {
                return Err(Error::data(format!("{name} CSV has duplicate tract id {key:?}")));
            }
        }
        Ok(SourceTable {
            name: name.to_string(),
            columns: wanted.iter().map(|(c, _)| c.to_string()).collect(),
            rows,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinReport {
    /// Distinct tract ids across all sources.
    pub union_keys: usize,
    pub joined: usize,
    /// Union keys absent from each source.
    pub missing_from: BTreeMap<String, usize>,
}

impl JoinReport {
    pub fn unmatched(&self) -> usize {
        self.union_keys - self.joined
    }
}

/// Inner join of tract geometries, demographics, health and CIAS aggregates.
///
/// `cias` holds per-tract aggregates in the order of `cias_columns`.
pub fn join_sources(
    tracts: &[TractGeometry],
    demographics: &SourceTable,
    health: &SourceTable,
    cias: &BTreeMap<String, Vec<f64>>,
    cias_columns: &[String],
) -> Result<(TractTable, JoinReport)> {
    let mut geo: BTreeMap<&str, &TractGeometry> = BTreeMap::new();
    for t in tracts {
        if geo.insert(t.tract_id.as_str(), t).is_some() {
            return Err(Error::data(format!("tract geometries contain duplicate id {:?}", t.tract_id)));
        }
    }
    let key_sets: [(&str, BTreeSet<&str>); 4] = [
        ("tracts", geo.keys().copied().collect()),
        (&demographics.name, demographics.rows.keys().map(String::as_str).collect()),
        (&health.name, health.rows.keys().map(String::as_str).collect()),
        ("cias", cias.keys().map(String::as_str).collect()),
    ];
    let union: BTreeSet<&str> = key_sets.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    let joined: Vec<&str> = union
        .iter()
        .copied()
        .filter(|k| key_sets.iter().all(|(_, s)| s.contains(k)))
        .collect();
    let mut report = JoinReport {
        union_keys: union.len(),
        joined: joined.len(),
        missing_from: BTreeMap::new(),
    };
    for (name, set) in &key_sets {
        let missing = union.len() - set.len();
        report.missing_from.insert(name.to_string(), missing);
        if missing > 0 {
            log::warn!("{missing} tract(s) absent from {name}; dropped by inner join");
        }
    }

    let mut columns: Vec<Column> = Vec::new();
    let mut push = |name: &str, values: Vec<Option<f64>>| {
        columns.push(Column {
            name: name.to_string(),
            values,
        })
    };
    for (ci, name) in demographics.columns.iter().enumerate() {
        push(name, joined.iter().map(|k| demographics.rows[*k][ci]).collect());
    }
    for (ci, name) in health.columns.iter().enumerate() {
        push(name, joined.iter().map(|k| health.rows[*k][ci]).collect());
    }
    for (ci, name) in cias_columns.iter().enumerate() {
        push(name, joined.iter().map(|k| Some(cias[*k][ci])).collect());
    }
    push("centroid_lon", joined.iter().map(|k| Some(geo[k].centroid.lon)).collect());
    push("centroid_lat", joined.iter().map(|k| Some(geo[k].centroid.lat)).collect());

    let table = TractTable {
        tract_ids: joined.iter().map(|s| s.to_string()).collect(),
        columns,
    };
    for (g, over) in race_exceeds_total(&table) {
        log::warn!("{over} tract(s) report more pop_{g} than total population");
    }
    Ok((table, report))
}

/// Per race group, the number of rows whose count exceeds the total population.
pub fn race_exceeds_total(table: &TractTable) -> Vec<(&'static str, usize)> {
    let mut out = Vec::new();
    let Some(total) = table.column("total_population") else { return out };
    for g in RACE_GROUPS {
        let Some(col) = table.column(&race_column(g)) else { continue };
        let over = col
            .iter()
            .zip(total)
            .filter(|(r, t)| matches!((r, t), (Some(r), Some(t)) if r > t))
            .count();
        if over > 0 {
            out.push((g, over));
        }
    }
    out
}

/// Replaces missing entries with the column mean over present entries.
/// Returns the per-column imputation counts (only columns with imputations).
pub fn impute_column_means(table: &mut TractTable) -> Result<BTreeMap<String, usize>> {
    let mut counts = BTreeMap::new();
    for col in &mut table.columns {
        let present: Vec<f64> = col.values.iter().flatten().copied().collect();
        let missing = col.values.len() - present.len();
        if missing == 0 {
            continue;
        }
        if present.is_empty() {
            return Err(Error::data(format!(
                "column {:?} has no values to impute from",
                col.name
            )));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        for v in col.values.iter_mut().filter(|v| v.is_none()) {
            *v = Some(mean);
        }
        counts.insert(col.name.clone(), missing);
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub std: f64,
}

pub fn zscore_fit(values: &[f64]) -> Result<ColumnStats> {
    if values.is_empty() {
        return Err(Error::invalid("cannot fit z-score statistics on an empty column"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(ColumnStats { mean, std: var.sqrt() })
}

/// `(v − mean)/std`; a constant column (std = 0) maps to all zeros.
pub fn zscore_apply(values: &[f64], stats: &ColumnStats) -> Vec<f64> {
    if stats.std == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - stats.mean) / stats.std).collect()
}

pub fn zscore_invert(values: &[f64], stats: &ColumnStats) -> Vec<f64> {
    values.iter().map(|v| v * stats.std + stats.mean).collect()
}

/// Rectangular numeric matrix with named columns, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub row_keys: Vec<String>,
    pub names: Vec<String>,
    data: Vec<f64>,
    pub stats: Option<Vec<ColumnStats>>,
}

impl FeatureMatrix {
    pub fn new(row_keys: Vec<String>, names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::invalid("feature names must be unique"));
        }
        if data.len() != row_keys.len() * names.len() {
            return Err(Error::invalid(format!(
                "matrix data has {} values, expected {} x {}",
                data.len(),
                row_keys.len(),
                names.len()
            )));
        }
        Ok(FeatureMatrix {
            row_keys,
            names,
            data,
            stats: None,
        })
    }

    /// Builds from row vectors with generated keys `0..n`.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(Error::invalid(format!(
                "row has {} values, expected {}",
                r.len(),
                names.len()
            )));
        }
        let keys = (0..rows.len()).map(|i| i.to_string()).collect();
        FeatureMatrix::new(keys, names, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.names.len();
        &self.data[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.names.len() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.names.len().max(1))
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            row_keys: idx.iter().map(|&i| self.row_keys[i].clone()).collect(),
            names: self.names.clone(),
            data,
            stats: self.stats.clone(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.stats.is_some()
    }

    /// Fits per-column z-score statistics and applies them in place.
    pub fn normalize(&mut self) -> Result<()> {
        if self.stats.is_some() {
            return Err(Error::invalid("matrix is already normalized"));
        }
        let mut stats = Vec::with_capacity(self.n_cols());
        for j in 0..self.n_cols() {
            let col = self.column(j);
            let s = zscore_fit(&col)?;
            if s.std == 0.0 {
                log::warn!("feature {:?} is constant; normalized to 0", self.names[j]);
            }
            for (i, z) in zscore_apply(&col, &s).into_iter().enumerate() {
                let p = self.n_cols();
                self.data[i * p + j] = z;
            }
            stats.push(s);
        }
        self.stats = Some(stats);
        Ok(())
    }

    /// Applies previously fitted statistics (e.g. from a training subset).
    pub fn normalize_with(&mut self, stats: Vec<ColumnStats>) -> Result<()> {
        if self.stats.is_some() {
            return Err(Error::invalid("matrix is already normalized"));
        }
        if stats.len() != self.n_cols() {
            return Err(Error::invalid(format!(
                "{} column stats for {} columns",
                stats.len(),
                self.n_cols()
            )));
        }
        let p = self.n_cols();
        for (j, s) in stats.iter().enumerate() {
            let col = self.column(j);
            for (i, z) in zscore_apply(&col, s).into_iter().enumerate() {
                self.data[i * p + j] = z;
            }
        }
        self.stats = Some(stats);
        Ok(())
    }

    pub fn denormalize(&mut self) -> Result<()> {
        let stats = self
            .stats
            .take()
            .ok_or_else(|| Error::invalid("matrix is not normalized"))?;
        let p = self.n_cols();
        for (j, s) in stats.iter().enumerate() {
            let col = self.column(j);
            for (i, v) in zscore_invert(&col, s).into_iter().enumerate() {
                self.data[i * p + j] = v;
            }
        }
        Ok(())
    }
}

/// Grid-level analysis dataset: 16 features plus the income target.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    pub features: FeatureMatrix,
    pub target: Vec<f64>,
    pub excluded_points: usize,
}

/// One row per assigned grid point carrying its tract's values.
pub fn broadcast_to_grid(table: &TractTable, grid: &[GridPoint]) -> Result<GridDataset> {
    let tract_cols: Vec<&[Option<f64>]> = FEATURES[2..]
        .iter()
        .map(|name| table.require(name))
        .collect::<Result<_>>()?;
    let target_col = table.require(TARGET)?;
    let mut keys = Vec::new();
    let mut data = Vec::new();
    let mut target = Vec::new();
    let mut excluded = 0;
    for g in grid {
        let Some(row) = g.tract_id.as_deref().and_then(|t| table.row_index(t)) else {
            excluded += 1;
            continue;
        };
        let mut values = Vec::with_capacity(FEATURES.len());
        values.push(g.location.lon);
        values.push(g.location.lat);
        for col in &tract_cols {
            values.push(col[row].ok_or_else(|| {
                Error::invalid(format!("tract {} has missing values; impute first", table.tract_ids[row]))
            })?);
        }
        let y = target_col[row]
            .ok_or_else(|| Error::invalid(format!("tract {} has no {TARGET}", table.tract_ids[row])))?;
        keys.push(table.tract_ids[row].clone());
        data.extend(values);
        target.push(y);
    }
    if excluded > 0 {
        log::warn!("{excluded} grid point(s) without a joined tract excluded from the dataset");
    }
    let features = FeatureMatrix::new(keys, FEATURES.iter().map(|s| s.to_string()).collect(), data)?;
    Ok(GridDataset {
        features,
        target,
        excluded_points: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeoPoint, Polygon, PolygonRing};
    use crate::rng::SplitMix64;

    fn cv(v: &[f64]) -> CiasVector {
        CiasVector { scores: v.to_vec() }
    }

    #[test]
    fn aggregate_sum_and_mean() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let (p1, p2, p3, p4) = (cv(&[5.0]), cv(&[1.0]), cv(&[3.0]), cv(&[9.0]));
        let pts = vec![(Some("a"), &p1), (Some("b"), &p2), (Some("b"), &p3), (None, &p4)];
        let sum = aggregate_cias_to_tracts(pts.clone(), &ids, 1, AggregationMode::Sum);
        let mean = aggregate_cias_to_tracts(pts, &ids, 1, AggregationMode::Mean);
        assert_eq!(sum.per_tract["a"], vec![5.0]);
        assert_eq!(mean.per_tract["a"], vec![5.0]);
        assert_eq!(sum.per_tract["b"], vec![4.0]);
        assert_eq!(mean.per_tract["b"], vec![2.0]);
        assert_eq!(sum.per_tract["c"], vec![0.0]);
        assert_eq!(sum.empty_tracts, vec!["c".to_string()]);
        assert_eq!(sum.dropped_points, 1);
    }

    #[test]
    fn aggregate_matches_groupby_oracle() {
        let mut rng = SplitMix64::new(4);
        let ids: Vec<String> = (0..30).map(|i| format!("t{i:02}")).collect();
        let scores: Vec<CiasVector> = (0..10_000).map(|_| cv(&[rng.next_f64(), 2.0 * rng.next_f64()])).collect();
        let owners: Vec<usize> = (0..10_000).map(|_| rng.below(30)).collect();
        let pts: Vec<_> = owners.iter().zip(&scores).map(|(&o, s)| (Some(ids[o].as_str()), s)).collect();
        let sum = aggregate_cias_to_tracts(pts.clone(), &ids, 2, AggregationMode::Sum);
        let mean = aggregate_cias_to_tracts(pts, &ids, 2, AggregationMode::Mean);
        for (t, id) in ids.iter().enumerate() {
            let members: Vec<&CiasVector> = owners.iter().zip(&scores).filter(|(&o, _)| o == t).map(|(_, s)| s).collect();
            for c in 0..2 {
                let oracle: f64 = members.iter().map(|s| s.scores[c]).sum();
                assert!((sum.per_tract[id][c] - oracle).abs() <= 1e-12 * oracle.abs());
                let via_mean = mean.per_tract[id][c] * members.len() as f64;
                assert!((via_mean - sum.per_tract[id][c]).abs() <= 1e-12 * oracle.abs());
            }
        }
    }

    fn table(values: Vec<Option<f64>>) -> TractTable {
        TractTable {
            tract_ids: (0..values.len()).map(|i| i.to_string()).collect(),
            columns: vec![Column {
                name: "x".into(),
                values,
            }],
        }
    }

    #[test]
    fn impute_fills_means() {
        let mut t = table(vec![Some(1.0), None, Some(3.0)]);
        let counts = impute_column_means(&mut t).unwrap();
        assert_eq!(t.column("x").unwrap(), &[Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(counts["x"], 1);

        let mut full = table(vec![Some(1.0), Some(4.0)]);
        let before = full.clone();
        assert!(impute_column_means(&mut full).unwrap().is_empty());
        assert_eq!(full, before);

        let mut empty = table(vec![None, None]);
        let err = impute_column_means(&mut empty).unwrap_err().to_string();
        assert!(err.contains("\"x\""), "{err}");
    }

    #[test]
    fn zscore_hand_values() {
        let s = zscore_fit(&[1.0, 2.0, 3.0]).unwrap();
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert!((s.std - 0.816_496_6).abs() < 1e-6);
        let z = zscore_apply(&[1.0, 2.0, 3.0], &s);
        assert!((z[0] + 1.224_744_9).abs() < 1e-6 && z[1].abs() < 1e-12 && (z[2] - 1.224_744_9).abs() < 1e-6);
        let c = zscore_fit(&[7.0, 7.0, 7.0]).unwrap();
        assert_eq!(zscore_apply(&[7.0, 7.0, 7.0], &c), vec![0.0; 3]);
        assert!(zscore_fit(&[]).is_err());
    }

    #[test]
    fn normalize_round_trip() {
        let mut rng = SplitMix64::new(8);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.next_f64() * 100.0, 3.0, rng.next_gaussian()]).collect();
        let mut m = FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
        let orig = m.clone();
        m.normalize().unwrap();
        assert!(m.column(1).iter().all(|&v| v == 0.0));
        m.denormalize().unwrap();
        for i in 0..50 {
            for j in [0, 2] {
                assert!((m.get(i, j) - orig.get(i, j)).abs() <= 1e-12 * orig.get(i, j).abs().max(1.0));
            }
        }
    }

    fn square_tract(id: &str, x0: f64) -> TractGeometry {
        let ring = PolygonRing::from_coords(&[(x0, 40.0), (x0 + 0.01, 40.0), (x0 + 0.01, 40.01), (x0, 40.01)]).unwrap();
        TractGeometry::new(id, vec![Polygon::simple(ring)]).unwrap()
    }

    const DEMO: &str = "GEOID,total_population,population_density,median_income,pop_white,pop_black,pop_native,pop_asian,pop_nhpi,pop_other,pop_multiracial\n\
t1,100,1000,50000,50,20,1,10,0,9,10\n\
t2,200,2000,60000,100,50,2,20,1,17,10\n\
t3,300,,70000,150,60,3,30,2,35,20\n";

    fn health(rows: &[(&str, &str)]) -> SourceTable {
        let mut s = String::from("GEOID,depression_pct\n");
        for (k, v) in rows {
            s.push_str(&format!("{k},{v}\n"));
        }
        let m = ColumnMapping::default();
        SourceTable::from_csv("health", s.as_bytes(), &m.tract_id, &m.health()).unwrap()
    }

    fn demo(text: &str) -> Result<SourceTable> {
        let m = ColumnMapping::default();
        SourceTable::from_csv("demographics", text.as_bytes(), &m.tract_id, &m.demographics())
    }

    fn cias_for(ids: &[&str]) -> BTreeMap<String, Vec<f64>> {
        ids.iter().enumerate().map(|(i, id)| (id.to_string(), vec![i as f64; 4])).collect()
    }

    fn cias_cols() -> Vec<String> {
        CIAS_COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn join_all_present_and_one_missing() {
        let tracts = vec![square_tract("t1", 0.0), square_tract("t2", 0.01), square_tract("t3", 0.02)];
        let d = demo(DEMO).unwrap();
        let h = health(&[("t1", "10"), ("t2", "12"), ("t3", "14")]);
        let (t, r) = join_sources(&tracts, &d, &h, &cias_for(&["t1", "t2", "t3"]), &cias_cols()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(r.unmatched(), 0);
        assert_eq!(t.value(2, "population_density"), None);

        let h2 = health(&[("t1", "10"), ("t3", "14")]);
        let (t, r) = join_sources(&tracts, &d, &h2, &cias_for(&["t1", "t2", "t3"]), &cias_cols()).unwrap();
        assert_eq!(t.tract_ids, vec!["t1", "t3"]);
        assert_eq!(r.missing_from["health"], 1);
        assert_eq!(r.unmatched(), 1);
        assert_eq!(r.joined + r.unmatched(), r.union_keys);
    }

    #[test]
    fn join_is_order_independent() {
        let tracts = vec![square_tract("t3", 0.02), square_tract("t1", 0.0), square_tract("t2", 0.01)];
        let lines: Vec<&str> = DEMO.lines().collect();
        let shuffled = format!("{}\n{}\n{}\n{}\n", lines[0], lines[3], lines[1], lines[2]);
        let h = health(&[("t3", "14"), ("t2", "12"), ("t1", "10")]);
        let (a, _) = join_sources(&tracts, &demo(DEMO).unwrap(), &h, &cias_for(&["t1", "t2", "t3"]), &cias_cols()).unwrap();
        let mut rev = tracts.clone();
        rev.reverse();
        let (b, _) = join_sources(&rev, &demo(&shuffled).unwrap(), &h, &cias_for(&["t1", "t2", "t3"]), &cias_cols()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dup = format!("{DEMO}t1,1,1,1,1,1,1,1,1,1,1\n");
        assert!(demo(&dup).is_err());
        assert!(demo("GEOID,total_population\nt1,5\n").is_err());
    }

    #[test]
    fn broadcast_shares_tract_rows() {
        let tracts = vec![square_tract("t1", 0.0), square_tract("t2", 0.01)];
        let d = demo(DEMO).unwrap();
        let h = health(&[("t1", "10"), ("t2", "12")]);
        let (mut t, _) = join_sources(&tracts, &d, &h, &cias_for(&["t1", "t2"]), &cias_cols()).unwrap();
        impute_column_means(&mut t).unwrap();
        let gp = |lon: f64, tract: Option<&str>| GridPoint {
            row: 0,
            col: 0,
            location: GeoPoint { lon, lat: 40.005 },
            tract_id: tract.map(str::to_string),
        };
        let grid = vec![gp(0.002, Some("t1")), gp(0.004, Some("t1")), gp(0.5, None), gp(0.6, Some("zz"))];
        let ds = broadcast_to_grid(&t, &grid).unwrap();
        assert_eq!(ds.features.n_cols(), 16);
        assert_eq!(ds.features.n_rows(), 2);
        assert_eq!(ds.excluded_points, 2);
        assert_eq!(ds.features.row(0)[2..], ds.features.row(1)[2..]);
        assert_ne!(ds.features.row(0)[0], ds.features.row(1)[0]);
        assert_eq!(ds.target, vec![50000.0, 50000.0]);
    }
}
