//! Pearson correlation analysis with optional percent-share race columns.

use crate::error::{Error, Result};
use crate::integration::{race_column, RACE_GROUPS};

/// `100 · count / total`; `None` when the total is zero.
pub fn to_percent_shares(counts: &[f64], total: f64) -> Result<Option<Vec<f64>>> {
    if let Some(c) = counts.iter().find(|c| !(**c >= 0.0)) {
        return Err(Error::invalid(format!("group counts must be >= 0, got {c}")));
    }
    if !(total >= 0.0) {
        return Err(Error::invalid(format!("total must be >= 0, got {total}")));
    }
    if total == 0.0 {
        return Ok(None);
    }
    Ok(Some(counts.iter().map(|c| 100.0 * c / total).collect()))
}

/// Product-moment correlation over pairwise-complete rows.
///
/// `None` when fewer than two complete pairs remain or either side has zero
/// variance.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "pearson needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if pairs.len() < 2 {
        return Ok(None);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Convenience wrapper for complete columns.
pub fn pearson_complete(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    let wrap = |v: &[f64]| v.iter().copied().map(Some).collect::<Vec<_>>();
    pearson(&wrap(x), &wrap(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major `names.len()²` entries; `None` marks zero-variance pairs.
    pub values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.names.len() + j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn by_name(&self, a: &str, b: &str) -> Option<f64> {
        self.get(self.index_of(a)?, self.index_of(b)?)
    }
}

/// Replaces each `pop_<group>` column by its percent share of `total_population`.
pub fn race_counts_to_shares(names: &[String], columns: &mut [Vec<Option<f64>>]) -> Result<()> {
    let Some(total_idx) = names.iter().position(|n| n == "total_population") else {
        return Err(Error::invalid("percent shares need a total_population column"));
    };
    let total = columns[total_idx].clone();
    for g in RACE_GROUPS {
        let Some(idx) = names.iter().position(|n| *n == race_column(g)) else { continue };
        let col = &mut columns[idx];
        for (v, t) in col.iter_mut().zip(&total) {
            *v = match (*v, *t) {
                (Some(c), Some(t)) => to_percent_shares(&[c], t)?.map(|s| s[0]),
                _ => None,
            };
        }
    }
    Ok(())
}

/// Pairwise Pearson matrix over named columns.
pub fn correlation_matrix(names: &[String], columns: &[Vec<Option<f64>>], race_as_shares: bool) -> Result<CorrelationMatrix> {
    if names.len() != columns.len() {
        return Err(Error::invalid("one name per column required"));
    }
    let rows = columns.first().map_or(0, Vec::len);
    if rows < 2 || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::invalid("correlation needs >= 2 rows in equal-length columns"));
    }
    let mut cols = columns.to_vec();
    if race_as_shares {
        race_counts_to_shares(names, &mut cols)?;
    }
    let p = names.len();
    let mut values = vec![None; p * p];
    for i in 0..p {
        for j in i..p {
            let r = if i == j {
                pearson(&cols[i], &cols[i])?.map(|_| 1.0)
            } else {
                pearson(&cols[i], &cols[j])?
            };
            values[i * p + j] = r;
            values[j * p + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        values,
    })
}
