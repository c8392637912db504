//! Metric workspace for proximity queries: an equirectangular projection
//! anchored at a fixed origin, and a static median-split KD-tree over the
//! projected points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeoPoint;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Largest lat or lon separation from the origin accepted by [`Projection::project`].
pub const MAX_SEPARATION_DEG: f64 = 5.0;

/// Equirectangular projection: x = R·Δλ·cos φ₀, y = R·Δφ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    origin: GeoPoint,
    cos_lat: f64,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Self {
        Projection {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn meters_per_degree_lat(&self) -> f64 {
        EARTH_RADIUS_M * std::f64::consts::PI / 180.0
    }

    pub fn meters_per_degree_lon(&self) -> f64 {
        self.meters_per_degree_lat() * self.cos_lat
    }

    pub fn project(&self, p: GeoPoint, source_id: usize) -> Result<ProjectedPoint> {
        let dlat = p.lat - self.origin.lat;
        let dlon = p.lon - self.origin.lon;
        if dlat.abs() >= MAX_SEPARATION_DEG || dlon.abs() >= MAX_SEPARATION_DEG {
            return Err(Error::invalid(format!(
                "point ({}, {}) is more than {MAX_SEPARATION_DEG} degrees from the projection origin",
                p.lon, p.lat
            )));
        }
        Ok(self.project_unchecked(p, source_id))
    }

    pub(crate) fn project_unchecked(&self, p: GeoPoint, source_id: usize) -> ProjectedPoint {
        ProjectedPoint {
            x: EARTH_RADIUS_M * (p.lon - self.origin.lon).to_radians() * self.cos_lat,
            y: EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
            source_id,
        }
    }

    /// Planar distance in metres between two projected geographic points.
    pub fn distance_m(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let pa = self.project_unchecked(a, 0);
        let pb = self.project_unchecked(b, 0);
        pa.distance(&pb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub source_id: usize,
}

impl ProjectedPoint {
    pub fn new(x: f64, y: f64, source_id: usize) -> Self {
        ProjectedPoint { x, y, source_id }
    }

    #[inline]
    pub fn distance(&self, other: &ProjectedPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    #[inline]
    fn coord(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }
}

/// A query hit: caller id and distance in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub source_id: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    point: ProjectedPoint,
    /// Position in the build input; the tie-breaker for equal distances.
    order: usize,
}

/// Static 2-d tree stored implicitly: the median of `entries[lo..hi]` sits at
/// `(lo + hi) / 2`, its subtrees on either side. Axis alternates x, y by depth.
#[derive(Debug, Clone)]
pub struct KdTree {
    entries: Vec<Entry>,
}

impl KdTree {
    pub fn build(points: &[ProjectedPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot build a KD-tree over zero points"));
        }
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::invalid(format!("non-finite projected point (id {})", p.source_id)));
        }
        let mut entries: Vec<Entry> = points
            .iter()
            .enumerate()
            .map(|(order, &point)| Entry { point, order })
            .collect();
        build_recursive(&mut entries, 0);
        Ok(KdTree { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn root(&self) -> ProjectedPoint {
        self.entries[self.entries.len() / 2].point
    }

    pub fn depth(&self) -> usize {
        fn go(n: usize) -> usize {
            if n == 0 {
                0
            } else {
                1 + go(n / 2).max(go(n - n / 2 - 1))
            }
        }
        go(self.entries.len())
    }

    /// The `k` nearest points, ascending by (distance, input order).
    pub fn nearest_k(&self, q: &ProjectedPoint, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.nearest_rec(0, self.entries.len(), 0, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| Neighbor {
                source_id: c.source_id,
                distance: c.distance,
            })
            .collect()
    }

    fn nearest_rec(
        &self,
        lo: usize,
        hi: usize,
        axis: usize,
        q: &ProjectedPoint,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let entry = &self.entries[mid];
        let cand = Candidate {
            distance: entry.point.distance(q),
            order: entry.order,
            source_id: entry.point.source_id,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(cand);
        }

        let diff = q.coord(axis) - entry.point.coord(axis);
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        let next = 1 - axis;
        self.nearest_rec(near.0, near.1, next, q, k, heap);
        // Equal-distance points must still be visited for the order tie-break.
        let must_visit = heap.len() < k || diff.abs() <= heap.peek().map_or(f64::INFINITY, |c| c.distance);
        if must_visit {
            self.nearest_rec(far.0, far.1, next, q, k, heap);
        }
    }

    /// All points within `r` metres, ascending by (distance, input order).
    pub fn within_radius(&self, q: &ProjectedPoint, r: f64) -> Vec<Neighbor> {
        let mut hits: Vec<Candidate> = Vec::new();
        if r.is_nan() || r < 0.0 {
            return Vec::new();
        }
        self.radius_rec(0, self.entries.len(), 0, q, r, &mut hits);
        hits.sort();
        hits.into_iter()
            .map(|c| Neighbor {
                source_id: c.source_id,
                distance: c.distance,
            })
            .collect()
    }

    fn radius_rec(&self, lo: usize, hi: usize, axis: usize, q: &ProjectedPoint, r: f64, hits: &mut Vec<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let entry = &self.entries[mid];
        let d = entry.point.distance(q);
        if d <= r {
            hits.push(Candidate {
                distance: d,
                order: entry.order,
                source_id: entry.point.source_id,
            });
        }
        let diff = q.coord(axis) - entry.point.coord(axis);
        let next = 1 - axis;
        if diff <= r {
            self.radius_rec(lo, mid, next, q, r, hits);
        }
        if diff >= -r {
            self.radius_rec(mid + 1, hi, next, q, r, hits);
        }
    }

    /// Checks the partition invariant at every node; used by tests.
    pub fn check_invariants(&self) -> bool {
        fn go(entries: &[Entry], axis: usize) -> bool {
            if entries.is_empty() {
                return true;
            }
            let mid = entries.len() / 2;
            let split = entries[mid].point.coord(axis);
            entries[..mid].iter().all(|e| e.point.coord(axis) <= split)
                && entries[mid + 1..].iter().all(|e| e.point.coord(axis) >= split)
                && go(&entries[..mid], 1 - axis)
                && go(&entries[mid + 1..], 1 - axis)
        }
        go(&self.entries, 0)
    }
}

fn build_recursive(entries: &mut [Entry], axis: usize) {
    if entries.len() <= 1 {
        return;
    }
    let mid = entries.len() / 2;
    // (coordinate, input order) is a total order, so the split is deterministic.
    entries.select_nth_unstable_by(mid, |a, b| {
        a.point
            .coord(axis)
            .total_cmp(&b.point.coord(axis))
            .then(a.order.cmp(&b.order))
    });
    let (left, rest) = entries.split_at_mut(mid);
    build_recursive(left, 1 - axis);
    build_recursive(&mut rest[1..], 1 - axis);
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    distance: f64,
    order: usize,
    source_id: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.order.cmp(&other.order))
    }
}
