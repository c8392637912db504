//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Built with `harness = false`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cultaccess::accessibility::{cias_grid, cias_point, AssetCategory, AssetIndex, AssetRecord, DecayConfig};
use cultaccess::equity::{label_bins, quantile_bins, score_tracts, scas_total, BinningSpec};
use cultaccess::explain::{shap_exact, tree_shap, BackgroundSet, MAX_EXACT_FEATURES};
use cultaccess::geometry::{centroid, make_grid, polygon_contains, BoundingBox, GeoPoint, GridPoint, Polygon, PolygonRing};
use cultaccess::integration::{impute_column_means, race_column, Column, FeatureMatrix, TractTable, RACE_GROUPS};
use cultaccess::models::{
    count_parameters, evaluate, fit_gbm, fit_ols, fit_random_forest, train_test_split, ForestParams, GbmParams, Model,
    ModelSpec, SplitSpec,
};
use cultaccess::pipeline::{execute, run_pipeline, validate_config, Command, Stage};
use cultaccess::rng::SplitMix64;
use cultaccess::spatial_index::{KdTree, ProjectedPoint, Projection, EARTH_RADIUS_M};
use cultaccess::stats::pearson_complete;
use cultaccess::synthetic::{friedman, planted_correlation, tract_income_benchmark};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 decay correctness", Duration::from_secs(1), decay_correctness),
        ("2 kd-tree oracle equivalence", Duration::from_secs(10), kd_tree_equivalence),
        ("3 geometry oracles", Duration::MAX, geometry_oracles),
        ("4 scas safety and binning", Duration::MAX, scas_and_binning),
        ("5 normalization and imputation", Duration::MAX, normalization_imputation),
        ("6 correlation", Duration::MAX, correlation),
        ("7 model ordering", Duration::from_secs(60), model_ordering),
        ("8 ols recovery", Duration::MAX, ols_recovery),
        ("9 shapley axioms and oracle", Duration::from_secs(30), shapley),
        ("10 end-to-end determinism", Duration::MAX, end_to_end),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > budget => Err(format!("{d}; took {elapsed:.2?}, budget {budget:.0?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({elapsed:.2?}) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({elapsed:.2?}) {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn nyc() -> Projection {
    Projection::new(GeoPoint { lon: -73.95, lat: 40.72 })
}

fn random_point(rng: &mut SplitMix64, span: f64) -> GeoPoint {
    GeoPoint {
        lon: -73.95 + span * (rng.next_f64() - 0.5),
        lat: 40.72 + span * (rng.next_f64() - 0.5),
    }
}

fn asset(i: usize, category: AssetCategory, location: GeoPoint, weight: f64) -> AssetRecord {
    AssetRecord {
        id: format!("a{i}"),
        category,
        location,
        weight,
    }
}

/// Equirectangular metres computed directly from the formula.
fn oracle_distance(origin: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let c = origin.lat.to_radians().cos();
    let dx = (a.lon - b.lon) * k * c;
    let dy = (a.lat - b.lat) * k;
    (dx * dx + dy * dy).sqrt()
}

fn decay_correctness() -> Outcome {
    let proj = nyc();
    let origin = proj.origin();
    let north = GeoPoint {
        lon: origin.lon,
        lat: origin.lat + 2000.0 / proj.meters_per_degree_lat(),
    };
    let single = [asset(0, AssetCategory::Library, origin, 1.0)];
    let s = cias_point(&proj, north, &single, &DecayConfig::default()).map_err(|e| e.to_string())?;
    ensure!((s - 0.3678794412).abs() <= 1e-9, "single asset at 2 km scored {s}");

    let mut rng = SplitMix64::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let alpha = 1e-4 + 2e-3 * rng.next_f64();
        let cfg = DecayConfig {
            alpha,
            ..DecayConfig::default()
        };
        let n = 1 + rng.below(40);
        let assets: Vec<AssetRecord> = (0..n)
            .map(|i| asset(i, AssetCategory::Museum, random_point(&mut rng, 0.3), 0.1 + 3.0 * rng.next_f64()))
            .collect();
        let p = random_point(&mut rng, 0.3);
        let got = cias_point(&proj, p, &assets, &cfg).map_err(|e| e.to_string())?;
        let mut want = 0.0;
        for a in &assets {
            want += a.weight * (-alpha * oracle_distance(origin, p, a.location)).exp();
        }
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
    }
    ensure!(worst <= 1e-12, "max relative error {worst:e}");
    Ok(format!("S(2 km) = {s:.10}, max rel err {worst:.1e}"))
}

fn by_distance_then_id(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn brute_nearest(points: &[ProjectedPoint], q: &ProjectedPoint, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points.iter().map(|p| (p.distance(q), p.source_id)).collect();
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, by_distance_then_id);
    }
    all.truncate(k);
    all.sort_by(by_distance_then_id);
    all.into_iter().map(|o| o.1).collect()
}

fn brute_radius(points: &[ProjectedPoint], q: &ProjectedPoint, r: f64) -> Vec<usize> {
    let mut hits: Vec<(f64, usize)> = points
        .iter()
        .map(|p| (p.distance(q), p.source_id))
        .filter(|o| o.0 <= r)
        .collect();
    hits.sort_by(by_distance_then_id);
    hits.into_iter().map(|o| o.1).collect()
}

fn kd_tree_equivalence() -> Outcome {
    let mut rng = SplitMix64::new(202);
    // Coarse lattice coordinates force many exact distance ties.
    let points: Vec<ProjectedPoint> = (0..3000)
        .map(|i| {
            let x = (rng.below(200) as f64) * 25.0;
            let y = (rng.below(200) as f64) * 25.0;
            ProjectedPoint::new(x, y, i)
        })
        .collect();
    let tree = KdTree::build(&points).map_err(|e| e.to_string())?;
    ensure!(tree.check_invariants(), "partition invariant violated");
    for i in 0..10_000 {
        let q = ProjectedPoint::new(5000.0 * rng.next_f64(), 5000.0 * rng.next_f64(), 0);
        let (got, want): (Vec<usize>, Vec<usize>) = if i % 2 == 0 {
            let k = 1 + rng.below(30);
            (
                tree.nearest_k(&q, k).iter().map(|n| n.source_id).collect(),
                brute_nearest(&points, &q, k),
            )
        } else {
            let r = 400.0 * rng.next_f64();
            (
                tree.within_radius(&q, r).iter().map(|n| n.source_id).collect(),
                brute_radius(&points, &q, r),
            )
        };
        ensure!(got == want, "query {i} disagrees with brute force");
    }

    // Truncated scoring: 1,000 grid points against 200 assets.
    let proj = nyc();
    let origin = proj.origin();
    let assets: Vec<AssetRecord> = (0..200)
        .map(|i| asset(i, AssetCategory::Theater, random_point(&mut rng, 0.6), 0.5 + 1.5 * rng.next_f64()))
        .collect();
    let grid: Vec<GridPoint> = (0..1000)
        .map(|i| GridPoint {
            row: i,
            col: 0,
            location: random_point(&mut rng, 0.6),
            tract_id: None,
        })
        .collect();
    let eps = 1e-4;
    let cfg = DecayConfig {
        epsilon: eps,
        ..DecayConfig::default()
    };
    let index = AssetIndex::build(&proj, &[AssetCategory::Theater], &assets, &cfg).map_err(|e| e.to_string())?;
    let scores = cias_grid(&grid, &proj, &index, &cfg).map_err(|e| e.to_string())?;
    let bound = assets.len() as f64 * eps;
    let mut worst: f64 = 0.0;
    let mut truncated = 0;
    for (g, s) in grid.iter().zip(&scores) {
        let mut exact = 0.0;
        for a in &assets {
            exact += a.weight * (-cfg.alpha * oracle_distance(origin, g.location, a.location)).exp();
        }
        let err = exact - s.scores[0];
        ensure!(err >= -1e-12 && err <= bound, "truncation error {err:e} outside [0, {bound:e}]");
        if err > 1e-12 {
            truncated += 1;
        }
        worst = worst.max(err);
    }
    ensure!(truncated > 0, "cut-off radius never engaged");
    Ok(format!("10^4 queries exact; truncation err {worst:.2e} <= {bound:.0e}"))
}

/// Winding number of a closed ring around `p`; non-zero means inside.
fn winding_number(ring: &[(f64, f64)], p: (f64, f64)) -> i32 {
    let mut wn = 0;
    for w in ring.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let cross = (x1 - x0) * (p.1 - y0) - (p.0 - x0) * (y1 - y0);
        if y0 <= p.1 {
            if y1 > p.1 && cross > 0.0 {
                wn += 1;
            }
        } else if y1 <= p.1 && cross < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn star(rng: &mut SplitMix64, c: (f64, f64), r_lo: f64, r_hi: f64) -> Vec<(f64, f64)> {
    let n = 3 + rng.below(10);
    let mut angles: Vec<f64> = (0..n).map(|_| std::f64::consts::TAU * rng.next_f64()).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let mut ring: Vec<(f64, f64)> = angles
        .iter()
        .map(|a| {
            let r = r_lo + (r_hi - r_lo) * rng.next_f64();
            (c.0 + r * a.cos(), c.1 + r * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

fn ring_of(coords: &[(f64, f64)]) -> Result<PolygonRing, String> {
    PolygonRing::from_coords(&coords[..coords.len() - 1]).map_err(|e| e.to_string())
}

fn geometry_oracles() -> Outcome {
    let mut rng = SplitMix64::new(303);
    let mut cases = 0;
    let mut inside = 0;
    while cases < 10_000 {
        let c = (-74.0 + rng.next_f64(), 40.0 + rng.next_f64());
        let ext = star(&mut rng, c, 0.2, 0.5);
        let hole = (rng.below(2) == 0).then(|| star(&mut rng, c, 0.02, 0.15));
        if ext.len() < 4 || hole.as_ref().is_some_and(|h| h.len() < 4) {
            continue;
        }
        let poly = Polygon::new(ring_of(&ext)?, hole.iter().map(|h| ring_of(h)).collect::<Result<_, _>>()?);
        for _ in 0..10 {
            let p = (c.0 + 1.2 * (rng.next_f64() - 0.5), c.1 + 1.2 * (rng.next_f64() - 0.5));
            let want = winding_number(&ext, p) != 0 && hole.as_ref().is_none_or(|h| winding_number(h, p) == 0);
            let got = polygon_contains(&poly, GeoPoint { lon: p.0, lat: p.1 });
            ensure!(got == want, "containment disagrees at {p:?}");
            inside += want as usize;
            cases += 1;
        }
    }

    // Non-convex exterior with a hole, about one degree across.
    let ext = [(-74.0, 40.0), (-73.0, 40.0), (-73.0, 41.0), (-73.4, 40.55), (-74.0, 41.0), (-74.0, 40.0)];
    let hole = [(-73.9, 40.1), (-73.6, 40.1), (-73.6, 40.35), (-73.9, 40.35), (-73.9, 40.1)];
    let poly = Polygon::new(ring_of(&ext)?, vec![ring_of(&hole)?]);
    let got = centroid(std::slice::from_ref(&poly)).map_err(|e| e.to_string())?;
    // Jittered stratified Monte Carlo over the bounding square.
    let k = 1000;
    let (mut sx, mut sy, mut hits) = (0.0, 0.0, 0usize);
    for i in 0..k {
        for j in 0..k {
            let p = (
                -74.0 + (i as f64 + rng.next_f64()) / k as f64,
                40.0 + (j as f64 + rng.next_f64()) / k as f64,
            );
            if winding_number(&ext, p) != 0 && winding_number(&hole, p) == 0 {
                sx += p.0;
                sy += p.1;
                hits += 1;
            }
        }
    }
    let mc = (sx / hits as f64, sy / hits as f64);
    let err = (got.lon - mc.0).abs().max((got.lat - mc.1).abs());
    ensure!(err <= 1e-3, "centroid {got:?} vs Monte Carlo {mc:?}");

    let bbox = BoundingBox::new(40.49, 40.92, -74.26, -73.70).map_err(|e| e.to_string())?;
    let n = make_grid(&bbox, 500, 500).map_err(|e| e.to_string())?.len();
    ensure!(n == 250_000, "500x500 grid has {n} points");
    Ok(format!("{cases} cases ({inside} inside), centroid err {err:.1e}, grid {n}"))
}

fn tract_table(ids: &[String], cias: &[f64], population: &[f64]) -> TractTable {
    let col = |name: &str, values: Vec<Option<f64>>| Column {
        name: name.to_string(),
        values,
    };
    let mut columns = vec![
        col("cias_total", cias.iter().copied().map(Some).collect()),
        col("total_population", population.iter().copied().map(Some).collect()),
    ];
    for g in RACE_GROUPS {
        columns.push(col(&race_column(g), population.iter().map(|p| Some((p / 7.0).floor())).collect()));
    }
    TractTable {
        tract_ids: ids.to_vec(),
        columns,
    }
}

fn scas_and_binning() -> Outcome {
    let mut rng = SplitMix64::new(404);
    for _ in 0..10_000 {
        let agg = if rng.below(4) == 0 { 0.0 } else { 1e3 * rng.next_f64() };
        let s = scas_total(agg, 0.0).map_err(|e| e.to_string())?;
        ensure!(s.is_none(), "zero population produced {s:?}");
    }
    let spec = BinningSpec::new(20).map_err(|e| e.to_string())?;
    let n = 1000;
    let ids: Vec<String> = (0..n).map(|i| format!("36061{i:06}")).collect();
    let cias: Vec<f64> = (0..n).map(|_| 50.0 * rng.next_f64()).collect();
    let mut pop: Vec<f64> = (0..n).map(|_| (8000.0 * rng.next_f64()).round()).collect();
    for p in pop.iter_mut().step_by(37) {
        *p = 0.0;
    }
    let table = tract_table(&ids, &cias, &pop);
    let records = score_tracts(&table, &["cias_total".to_string()], &spec).map_err(|e| e.to_string())?;
    for (r, p) in records.iter().zip(&pop) {
        ensure!((*p == 0.0) == r.scas_total.is_none(), "tract {} no-data mismatch", r.tract_id);
        ensure!(r.scas_total.is_some() == r.bin.is_some(), "tract {} bin presence mismatch", r.tract_id);
    }

    for trial in 0..20 {
        let n = 1000 + trial;
        let mut values: Vec<f64> = (0..n).map(|_| 100.0 * rng.next_f64().powi(3)).collect();
        // Some exact ties.
        for i in (0..n).step_by(50) {
            values[i] = values[0];
        }
        let ids: Vec<String> = (0..n).map(|i| format!("t{i:05}")).collect();
        let keyed: Vec<(&str, Option<f64>)> = ids.iter().map(|s| s.as_str()).zip(values.iter().map(|v| Some(*v))).collect();
        let bins: Vec<u32> = quantile_bins(&keyed, 20).map_err(|e| e.to_string())?.into_iter().flatten().collect();
        let mut sizes = BTreeMap::new();
        for b in &bins {
            *sizes.entry(*b).or_insert(0usize) += 1;
        }
        let (lo, hi) = (sizes.values().min().unwrap(), sizes.values().max().unwrap());
        ensure!(sizes.len() == 20 && hi - lo <= 1, "bin sizes range {lo}..{hi}");
        for i in 0..n {
            for j in (0..n).step_by(97) {
                ensure!(!(values[i] < values[j] && bins[i] > bins[j]), "bins not monotone");
            }
        }
        let c = 10f64.powf(6.0 * rng.next_f64() - 3.0);
        let scaled: Vec<(&str, Option<f64>)> = keyed.iter().map(|(id, v)| (*id, v.map(|v| v * c))).collect();
        let rebinned: Vec<u32> = quantile_bins(&scaled, 20).map_err(|e| e.to_string())?.into_iter().flatten().collect();
        ensure!(rebinned == bins, "rescaling by {c} changed bins");
        for (a, b) in bins.iter().zip(&rebinned) {
            ensure!(label_bins(*a, &spec).ok() == label_bins(*b, &spec).ok(), "label changed");
        }
    }
    Ok("no-data on zero population; bins balanced, monotone, scale-free".into())
}

fn normalization_imputation() -> Outcome {
    let mut rng = SplitMix64::new(505);
    let (n, p) = (777, 12);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|j| 10f64.powi(j as i32 - 4) * rng.next_gaussian() + 1e3 * j as f64).collect())
        .collect();
    let mut m = FeatureMatrix::from_rows((0..p).map(|j| format!("f{j}")).collect(), &rows).map_err(|e| e.to_string())?;
    m.normalize().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        worst = worst.max(mean.abs()).max((std - 1.0).abs());
    }
    ensure!(worst <= 1e-9, "z-score deviation {worst:e}");

    let mut worst_mean: f64 = 0.0;
    for _ in 0..200 {
        let len = 5 + rng.below(200);
        let mut values: Vec<Option<f64>> = (0..len).map(|_| Some(100.0 * rng.next_f64())).collect();
        for _ in 0..rng.below(len - 1) {
            values[rng.below(len)] = None;
        }
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let before = present.iter().sum::<f64>() / present.len() as f64;
        let mut table = TractTable {
            tract_ids: (0..len).map(|i| format!("{i:04}")).collect(),
            columns: vec![Column {
                name: "x".into(),
                values: values.clone(),
            }],
        };
        impute_column_means(&mut table).map_err(|e| e.to_string())?;
        let after: Vec<f64> = table.columns[0].values.iter().map(|v| v.expect("imputed")).collect();
        for (o, a) in values.iter().zip(&after) {
            ensure!(o.is_none_or(|o| o == *a), "imputation changed a present value");
        }
        worst_mean = worst_mean.max((after.iter().sum::<f64>() / len as f64 - before).abs());
    }
    ensure!(worst_mean <= 1e-12, "imputation moved a mean by {worst_mean:e}");
    Ok(format!("z-score dev {worst:.1e}, mean shift {worst_mean:.1e}"))
}

fn correlation() -> Outcome {
    let mut rng = SplitMix64::new(606);
    let x: Vec<f64> = (0..500).map(|_| rng.next_gaussian()).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
    let r = pearson_complete(&x, &y).map_err(|e| e.to_string())?.ok_or("undefined")?;
    ensure!((r - 1.0).abs() <= 1e-12, "pearson(x, 2x+3) = {r}");
    let mut recovered = Vec::new();
    for seed in [1, 2, 3, 58, 2024] {
        let (a, b) = planted_correlation(5000, 0.58, seed);
        let r = pearson_complete(&a, &b).map_err(|e| e.to_string())?.ok_or("undefined")?;
        ensure!((r - 0.58).abs() <= 0.03, "planted 0.58 recovered as {r} (seed {seed})");
        recovered.push(format!("{r:.3}"));
    }
    Ok(format!("affine r = 1; planted r = [{}]", recovered.join(", ")))
}

fn model_ordering() -> Outcome {
    let data = tract_income_benchmark(2000, 200, 2024);
    let (train, test) = train_test_split(
        data.y.len(),
        &SplitSpec {
            train_fraction: 0.8,
            seed: 2024,
        },
    )
    .map_err(|e| e.to_string())?;
    let (tr, te) = data.split(&train, &test);
    let specs = [
        ModelSpec::LinearRegression,
        ModelSpec::RandomForest(ForestParams::default()),
        ModelSpec::GradientBoosting(GbmParams::default()),
    ];
    let mut r2 = Vec::new();
    for spec in &specs {
        let model = spec.fit(&tr.x, &tr.y, 2024).map_err(|e| e.to_string())?;
        let m = evaluate(&te.y, &model.predict(&te.x)).map_err(|e| e.to_string())?;
        r2.push(m.r2.ok_or("test targets are constant")?);
    }
    let (ols, rf, gbm) = (r2[0], r2[1], r2[2]);
    let detail = format!("test R2 rf {rf:.4} > gbm {gbm:.4} > ols {ols:.4}");
    ensure!(rf > gbm && gbm > ols, "ordering violated: {detail}");
    ensure!(rf - ols >= 0.1, "gap too small: {detail}");
    Ok(detail)
}

fn ols_recovery() -> Outcome {
    let mut rng = SplitMix64::new(808);
    let p = 16;
    let beta: Vec<f64> = (0..p).map(|_| 10.0 * rng.next_gaussian()).collect();
    let b0 = 42.5;
    let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..p).map(|_| rng.next_gaussian()).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| b0 + r.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>()).collect();
    let x = FeatureMatrix::from_rows((0..p).map(|j| format!("f{j}")).collect(), &rows).map_err(|e| e.to_string())?;
    let model = fit_ols(&x, &y).map_err(|e| e.to_string())?;
    let err = model
        .coefficients
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a - b).abs())
        .fold((model.intercept - b0).abs(), f64::max);
    ensure!(err <= 1e-8, "max coefficient error {err:e}");
    let k = count_parameters(&Model::Linear(model));
    ensure!(k == 17, "parameter count {k}");
    Ok(format!("max coef err {err:.1e}, {k} parameters"))
}

fn background(rows: &FeatureMatrix, n: usize) -> Result<BackgroundSet, String> {
    BackgroundSet::new((0..n).map(|i| rows.row(i).to_vec()).collect()).map_err(|e| e.to_string())
}

fn shapley() -> Outcome {
    // Local accuracy and a dummy (constant) feature on a full-size forest and booster.
    let mut data = friedman(600, 0.5, 909);
    let mut rows: Vec<Vec<f64>> = data.x.rows().map(|r| r.to_vec()).collect();
    for r in &mut rows {
        r[7] = 0.25;
    }
    data.x = FeatureMatrix::from_rows(data.x.names.clone(), &rows).map_err(|e| e.to_string())?;
    let bg = background(&data.x, 100)?;
    let forest = Model::Forest(
        fit_random_forest(&data.x, &data.y, &ForestParams { n_trees: 50, ..Default::default() }, 1)
            .map_err(|e| e.to_string())?,
    );
    let gbm = Model::Gbm(fit_gbm(&data.x, &data.y, &GbmParams::default(), 1).map_err(|e| e.to_string())?);
    let mut worst_acc: f64 = 0.0;
    let mut explained = 0;
    for model in [&forest, &gbm] {
        for i in 100..300 {
            let x = data.x.row(i);
            let e = tree_shap(model, x, &bg).map_err(|e| e.to_string())?;
            worst_acc = worst_acc.max((e.total() - model.predict_row(x)).abs());
            ensure!(e.contributions[7] == 0.0, "dummy feature got {}", e.contributions[7]);
            explained += 1;
        }
    }
    ensure!(worst_acc <= 1e-8, "local accuracy error {worst_acc:e}");
    // Features 2 and 4 never enter this function.
    let ignores_2 = |x: &[f64]| x[0] * x[1] + (x[3] - 0.5).max(0.0);
    let small: Vec<Vec<f64>> = (0..16).map(|i| data.x.row(i)[..5].to_vec()).collect();
    let e = shap_exact(ignores_2, &data.x.row(20)[..5], &BackgroundSet::new(small).map_err(|e| e.to_string())?, 5)
        .map_err(|e| e.to_string())?;
    ensure!(e.contributions[2] == 0.0 && e.contributions[4] == 0.0, "exact dummy φ non-zero");

    // Path-dependent algorithm against brute-force enumeration.
    let mut worst_oracle: f64 = 0.0;
    let mut compared = 0;
    for (case, p) in [4usize, 6, 8, 10, 12].into_iter().enumerate() {
        let d = friedman(300, 0.3, 1000 + case as u64);
        let rows: Vec<Vec<f64>> = d.x.rows().map(|r| r[..p].to_vec()).collect();
        let x = FeatureMatrix::from_rows((0..p).map(|j| format!("x{j}")).collect(), &rows).map_err(|e| e.to_string())?;
        let bg = background(&x, 16)?;
        let models = [
            Model::Forest(
                fit_random_forest(
                    &x,
                    &d.y,
                    &ForestParams {
                        n_trees: 10,
                        max_depth: Some(3),
                        mtry: Some(p.div_ceil(2)),
                        ..Default::default()
                    },
                    case as u64,
                )
                .map_err(|e| e.to_string())?,
            ),
            Model::Gbm(
                fit_gbm(&x, &d.y, &GbmParams { n_rounds: 10, ..Default::default() }, case as u64)
                    .map_err(|e| e.to_string())?,
            ),
        ];
        let n_rows = if p >= 12 { 2 } else { 5 };
        for model in &models {
            for i in 200..200 + n_rows {
                let row = x.row(i);
                let fast = tree_shap(model, row, &bg).map_err(|e| e.to_string())?;
                let slow = shap_exact(|r| model.predict_row(r), row, &bg, MAX_EXACT_FEATURES).map_err(|e| e.to_string())?;
                let diff = fast
                    .contributions
                    .iter()
                    .zip(&slow.contributions)
                    .map(|(a, b)| (a - b).abs())
                    .fold((fast.base_value - slow.base_value).abs(), f64::max);
                worst_oracle = worst_oracle.max(diff);
                compared += 1;
            }
        }
    }
    ensure!(worst_oracle <= 1e-8, "tree vs exact max diff {worst_oracle:e}");
    Ok(format!(
        "{explained} rows local acc {worst_acc:.1e}; {compared} rows tree≡exact {worst_oracle:.1e}"
    ))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_city")
}

fn end_to_end() -> Outcome {
    let cfg = validate_config(&fixture().join("config.json")).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut digests = Vec::new();
    let mut slowest = Duration::ZERO;
    for run in ["a", "b"] {
        let start = Instant::now();
        let m = run_pipeline(&cfg, &tmp.path().join(run)).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        digests.push(m.output_digests());
    }
    ensure!(slowest < Duration::from_secs(5), "pipeline took {slowest:.2?}");
    ensure!(digests[0] == digests[1], "consecutive runs differ");
    let mut goldens = 0;
    for entry in fs::read_dir(fixture().join("golden")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap();
        for run in ["a", "b"] {
            let got = fs::read(tmp.path().join(run).join(name)).map_err(|e| e.to_string())?;
            ensure!(got == fs::read(&path).map_err(|e| e.to_string())?, "{name:?} differs from golden");
        }
        goldens += 1;
    }
    let mut stagewise = BTreeMap::new();
    for stage in Stage::ALL {
        let m = execute(&cfg, &tmp.path().join("s"), Command::Stage(stage)).map_err(|e| e.to_string())?;
        stagewise.extend(m.output_digests());
    }
    ensure!(stagewise == digests[0], "stagewise digests differ from run");
    Ok(format!("run {slowest:.2?}; {goldens} goldens byte-identical; {} stage digests match", stagewise.len()))
}
