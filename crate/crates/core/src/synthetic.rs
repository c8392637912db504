//! Seeded synthetic datasets used by tests and the bundled benchmark.
//! All generators draw from [`SplitMix64`] so outputs are reproducible
//! across platforms.

use crate::integration::{FeatureMatrix, FEATURES};
use crate::rng::SplitMix64;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn split(&self, train: &[usize], test: &[usize]) -> (Dataset, Dataset) {
        let take = |idx: &[usize]| Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        };
        (take(train), take(test))
    }
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Friedman #1 over 16 uniform features (the last 11 are noise):
/// `10 sin(π x0 x1) + 20 (x2 − ½)² + 10 x3 + 5 x4 + noise·N(0,1)`.
pub fn friedman(n: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let t = 10.0 * (std::f64::consts::PI * r[0] * r[1]).sin()
            + 20.0 * (r[2] - 0.5).powi(2)
            + 10.0 * r[3]
            + 5.0 * r[4]
            + noise * rng.next_gaussian();
        rows.push(r);
        y.push(t);
    }
    Dataset {
        x: FeatureMatrix::from_rows(names(16), &rows).expect("rectangular rows"),
        y,
    }
}

/// 4×4 checkerboard on the first two of four uniform features; a single
/// split explains almost nothing.
pub fn checkerboard(n: usize, seed: u64) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
        let cell = (r[0] * 4.0).floor() as i64 + (r[1] * 4.0).floor() as i64;
        y.push(if cell % 2 == 0 { 1.0 } else { -1.0 });
        rows.push(r);
    }
    Dataset {
        x: FeatureMatrix::from_rows(names(4), &rows).expect("rectangular rows"),
        y,
    }
}

/// Pairs `(x, y)` of standard normals with population correlation `r`.
pub fn planted_correlation(n: usize, r: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(seed);
    let s = (1.0 - r * r).sqrt();
    (0..n)
        .map(|_| {
            let a = rng.next_gaussian();
            let e = rng.next_gaussian();
            (a, r * a + s * e)
        })
        .unzip()
}

/// Grid-point income benchmark in the 16-feature layout.
///
/// `n` grid points are spread over `n_tracts` synthetic tracts. Every
/// tract-level column (CIAS, population, density, depression, race counts)
/// and the income target are shared by all points of a tract; only lon/lat
/// vary per point. Income depends nonlinearly on distance to a city core,
/// race composition and density, plus a tract-level shock.
pub fn tract_income_benchmark(n: usize, n_tracts: usize, seed: u64) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let core = (-73.98, 40.75);
    struct Tract {
        lon: f64,
        lat: f64,
        cols: Vec<f64>,
        income: f64,
    }
    let mut tracts = Vec::with_capacity(n_tracts);
    for _ in 0..n_tracts {
        let lon = -74.20 + 0.45 * rng.next_f64();
        let lat = 40.55 + 0.35 * rng.next_f64();
        let dist_km = ((lon - core.0) * 84.3).hypot((lat - core.1) * 111.2);
        let cias_gallery = 40.0 * (-dist_km / 4.0).exp() * (0.7 + 0.6 * rng.next_f64());
        let cias_theater = 30.0 * (-dist_km / 5.0).exp() * (0.7 + 0.6 * rng.next_f64());
        let cias_museum = 25.0 * (-dist_km / 6.0).exp() * (0.7 + 0.6 * rng.next_f64());
        let cias_library = 4.0 + 3.0 * rng.next_f64() + 2.0 * (-dist_km / 15.0).exp();
        let total = 1500.0 + 6000.0 * rng.next_f64();
        let density = total / (0.2 + 1.5 * rng.next_f64() * (1.0 + dist_km / 10.0));
        let depression = 12.0 + 10.0 * rng.next_f64();
        // Race shares from a random simplex with a core-periphery tilt.
        let mut w: Vec<f64> = (0..7).map(|_| -rng.next_f64().max(1e-12).ln()).collect();
        w[0] *= 1.0 + 2.0 * (-dist_km / 8.0).exp();
        w[4] *= 0.05;
        w[2] *= 0.1;
        let sum: f64 = w.iter().sum();
        let counts: Vec<f64> = w.iter().map(|v| (total * v / sum).round()).collect();
        let white_share = counts[0] / total;
        let income = 35_000.0
            + 60_000.0 * (-dist_km / 6.0).exp()
            + 45_000.0 * white_share * white_share
            + 15_000.0 * ((depression - 17.0) / 2.0).tanh().abs()
            + if density > 20_000.0 { 12_000.0 } else { -4_000.0 }
            + 9_000.0 * rng.next_gaussian();
        let mut cols = vec![cias_gallery, cias_theater, cias_library, cias_museum, total, density, depression];
        cols.extend(counts);
        tracts.push(Tract { lon, lat, cols, income });
    }
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let t = &tracts[rng.below(n_tracts)];
        let mut r = vec![t.lon + 0.004 * (rng.next_f64() - 0.5), t.lat + 0.004 * (rng.next_f64() - 0.5)];
        r.extend_from_slice(&t.cols);
        rows.push(r);
        y.push(t.income);
    }
    Dataset {
        x: FeatureMatrix::from_rows(FEATURES.iter().map(|s| s.to_string()).collect(), &rows)
            .expect("rectangular rows"),
        y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = tract_income_benchmark(200, 30, 1);
        assert_eq!((a.x.n_rows(), a.x.n_cols()), (200, 16));
        let b = tract_income_benchmark(200, 30, 1);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(friedman(10, 1.0, 3).x.n_cols(), 16);
    }
}
