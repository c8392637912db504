//! Socio-cultural accessibility scores (per capita and per group) and
//! equal-frequency classification into low / moderate / high access.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integration::{race_column, TractTable, RACE_GROUPS};

/// Aggregate per person, or `None` when the population is zero.
pub fn scas_total(cias_aggregate: f64, population: f64) -> Result<Option<f64>> {
    if population.is_nan() || population < 0.0 {
        return Err(Error::invalid(format!("population must be >= 0, got {population}")));
    }
    if cias_aggregate.is_nan() || cias_aggregate < 0.0 {
        return Err(Error::invalid(format!("CIAS aggregate must be >= 0, got {cias_aggregate}")));
    }
    if population > 0.0 {
        Ok(Some(cias_aggregate / population))
    } else {
        Ok(None)
    }
}

/// Same contract as [`scas_total`] with a subgroup population.
pub fn scas_group(cias_aggregate: f64, group_population: f64) -> Result<Option<f64>> {
    scas_total(cias_aggregate, group_population)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub q: u32,
    pub low_upto: u32,
    pub high_from: u32,
}

impl BinningSpec {
    /// Defaults: low is bins `1..=⌊Q/3⌋`, high is `⌈2Q/3⌉+1..=Q`.
    pub fn new(q: u32) -> Result<Self> {
        BinningSpec::with_thresholds(q, None, None)
    }

    pub fn with_thresholds(q: u32, low_upto: Option<u32>, high_from: Option<u32>) -> Result<Self> {
        if q < 3 {
            return Err(Error::invalid(format!("bin count must be >= 3, got {q}")));
        }
        let spec = BinningSpec {
            q,
            low_upto: low_upto.unwrap_or(q / 3),
            high_from: high_from.unwrap_or((2 * q).div_ceil(3) + 1),
        };
        if !(1 <= spec.low_upto && spec.low_upto < spec.high_from && spec.high_from <= q) {
            return Err(Error::invalid(format!(
                "bin thresholds must satisfy 1 <= low_upto < high_from <= Q, got low_upto={} high_from={} Q={q}",
                spec.low_upto, spec.high_from
            )));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessLabel {
    Low,
    Moderate,
    High,
}

impl fmt::Display for AccessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessLabel::Low => "low",
            AccessLabel::Moderate => "moderate",
            AccessLabel::High => "high",
        })
    }
}

pub fn label_bins(bin: u32, spec: &BinningSpec) -> Result<AccessLabel> {
    if bin < 1 || bin > spec.q {
        return Err(Error::invalid(format!("bin {bin} outside 1..={}", spec.q)));
    }
    Ok(if bin <= spec.low_upto {
        AccessLabel::Low
    } else if bin >= spec.high_from {
        AccessLabel::High
    } else {
        AccessLabel::Moderate
    })
}

/// Equal-frequency bins over `(tract_id, value)` pairs.
///
/// Present values are sorted by (value, tract_id); the i-th of n gets bin
/// `⌊i·Q/n⌋ + 1`. Output is aligned with the input; absent values stay absent.
pub fn quantile_bins(values: &[(&str, Option<f64>)], q: u32) -> Result<Vec<Option<u32>>> {
    if q == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    let mut present: Vec<(usize, f64, &str)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, (id, v))| v.map(|v| (i, v, *id)))
        .collect();
    if let Some((_, v, id)) = present.iter().find(|(_, v, _)| !v.is_finite()) {
        return Err(Error::invalid(format!("tract {id} has non-finite score {v}")));
    }
    let n = present.len();
    if n < q as usize {
        return Err(Error::invalid(format!(
            "only {n} scored tracts for {q} bins; choose a smaller bin count"
        )));
    }
    present.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.2.cmp(b.2)));
    let mut bins = vec![None; values.len()];
    for (rank, (i, _, _)) in present.iter().enumerate() {
        bins[*i] = Some((rank as u64 * q as u64 / n as u64) as u32 + 1);
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScasRecord {
    pub tract_id: String,
    pub scas_total: Option<f64>,
    pub scas_by_group: BTreeMap<String, Option<f64>>,
    pub bin: Option<u32>,
    pub label: Option<AccessLabel>,
}

/// Scores every tract of an imputed table.
///
/// The tract aggregate is the sum of the given CIAS columns (the composite
/// under unit weights).
pub fn score_tracts(table: &TractTable, cias_columns: &[String], spec: &BinningSpec) -> Result<Vec<ScasRecord>> {
    let cias: Vec<&[Option<f64>]> = cias_columns
        .iter()
        .map(|c| table.require(c))
        .collect::<Result<_>>()?;
    let total = table.require("total_population")?;
    let groups: Vec<(&str, &[Option<f64>])> = RACE_GROUPS
        .iter()
        .map(|g| table.require(&race_column(g)).map(|c| (*g, c)))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(table.len());
    for (row, id) in table.tract_ids.iter().enumerate() {
        let aggregate: f64 = cias
            .iter()
            .map(|c| c[row].ok_or_else(|| Error::invalid(format!("tract {id}: missing CIAS aggregate"))))
            .sum::<Result<f64>>()?;
        let pop = total[row].ok_or_else(|| Error::invalid(format!("tract {id}: missing population")))?;
        let scas = scas_total(aggregate, pop).map_err(|e| Error::data(format!("tract {id}: {e}")))?;
        let mut by_group = BTreeMap::new();
        for (g, col) in &groups {
            let gp = col[row].ok_or_else(|| Error::invalid(format!("tract {id}: missing pop_{g}")))?;
            let s = scas_group(aggregate, gp).map_err(|e| Error::data(format!("tract {id}: {e}")))?;
            by_group.insert(g.to_string(), s);
        }
        records.push(ScasRecord {
            tract_id: id.clone(),
            scas_total: scas,
            scas_by_group: by_group,
            bin: None,
            label: None,
        });
    }

    let keyed: Vec<(&str, Option<f64>)> = records.iter().map(|r| (r.tract_id.as_str(), r.scas_total)).collect();
    let bins = quantile_bins(&keyed, spec.q)?;
    for (r, b) in records.iter_mut().zip(bins) {
        r.bin = b;
        r.label = b.map(|b| label_bins(b, spec)).transpose()?;
    }
    Ok(records)
}
