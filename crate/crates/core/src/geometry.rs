//! Grid construction, polygon containment, centroids and tract assignment.
//!
//! Containment runs on raw lon/lat degrees (planar even-odd rule). Any
//! distance-based decision goes through a [`Projection`] so it is metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial_index::Projection;

/// Default distance within which a point outside every tract snaps to the
/// nearest tract centroid.
pub const DEFAULT_SNAP_RADIUS_M: f64 = 250.0;

const EDGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::invalid(format!("non-finite coordinate ({lon}, {lat})")));
        }
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("coordinate out of range ({lon}, {lat})")));
        }
        Ok(GeoPoint { lon, lat })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn new(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self> {
        let all_finite = [min_lat, max_lat, min_lon, max_lon].iter().all(|v| v.is_finite());
        if !all_finite || min_lat >= max_lat || min_lon >= max_lon {
            return Err(Error::invalid(format!(
                "bounding box must satisfy min < max on both axes, got lat [{min_lat}, {max_lat}] lon [{min_lon}, {max_lon}]"
            )));
        }
        Ok(BoundingBox {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
        })
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: 0.5 * (self.min_lon + self.max_lon),
            lat: 0.5 * (self.min_lat + self.max_lat),
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    /// Smallest box around a set of polygons' exterior rings.
    pub fn around(polygons: &[Polygon]) -> Result<Self> {
        let mut pts = polygons.iter().flat_map(|p| p.exterior.vertices().iter());
        let first = pts
            .next()
            .ok_or_else(|| Error::invalid("cannot bound an empty polygon set"))?;
        let (mut min_lon, mut max_lon, mut min_lat, mut max_lat) = (first.lon, first.lon, first.lat, first.lat);
        for p in pts {
            min_lon = min_lon.min(p.lon);
            max_lon = max_lon.max(p.lon);
            min_lat = min_lat.min(p.lat);
            max_lat = max_lat.max(p.lat);
        }
        BoundingBox::new(min_lat, max_lat, min_lon, max_lon)
    }
}

/// Closed ring: first vertex repeated as last, at least four vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRing {
    vertices: Vec<GeoPoint>,
}

impl PolygonRing {
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::invalid(format!(
                "ring needs at least 4 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.first() != vertices.last() {
            return Err(Error::invalid("ring is not closed (first vertex != last vertex)"));
        }
        if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("ring repeats vertex {i} consecutively")));
        }
        Ok(PolygonRing { vertices })
    }

    /// Convenience constructor from (lon, lat) pairs; closes the ring if needed.
    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        let mut vertices = coords
            .iter()
            .map(|&(lon, lat)| GeoPoint::new(lon, lat))
            .collect::<Result<Vec<_>>>()?;
        if vertices.first() != vertices.last() {
            if let Some(&first) = vertices.first() {
                vertices.push(first);
            }
        }
        PolygonRing::new(vertices)
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    fn on_boundary(&self, p: GeoPoint) -> bool {
        self.edges().any(|(a, b)| on_segment(a, b, p))
    }

    /// Even-odd ray cast toward +lon.
    fn ray_cast(&self, p: GeoPoint) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Signed shoelace area and first moments, relative to the first vertex.
    fn moments(&self) -> (f64, f64, f64) {
        let o = self.vertices[0];
        let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for (p, q) in self.edges() {
            let (x0, y0) = (p.lon - o.lon, p.lat - o.lat);
            let (x1, y1) = (q.lon - o.lon, q.lat - o.lat);
            let cross = x0 * y1 - x1 * y0;
            a2 += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        let area = 0.5 * a2;
        // Centroid of the ring in absolute coordinates times its signed area.
        let (mx, my) = if a2 == 0.0 {
            (0.0, 0.0)
        } else {
            (cx / 6.0 + o.lon * area, cy / 6.0 + o.lat * area)
        };
        (area, mx, my)
    }
}

fn on_segment(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1.0);
    if cross.abs() > EDGE_TOLERANCE * scale {
        return false;
    }
    p.lon >= a.lon.min(b.lon) - EDGE_TOLERANCE
        && p.lon <= a.lon.max(b.lon) + EDGE_TOLERANCE
        && p.lat >= a.lat.min(b.lat) - EDGE_TOLERANCE
        && p.lat <= a.lat.max(b.lat) + EDGE_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: PolygonRing,
    pub holes: Vec<PolygonRing>,
}

impl Polygon {
    pub fn new(exterior: PolygonRing, holes: Vec<PolygonRing>) -> Self {
        Polygon { exterior, holes }
    }

    pub fn simple(exterior: PolygonRing) -> Self {
        Polygon {
            exterior,
            holes: Vec::new(),
        }
    }
}

/// True iff `p` is inside the exterior and outside every hole. Points on
/// any ring edge count as inside.
pub fn polygon_contains(poly: &Polygon, p: GeoPoint) -> bool {
    if poly.exterior.on_boundary(p) {
        return true;
    }
    if !poly.exterior.ray_cast(p) {
        return false;
    }
    for hole in &poly.holes {
        if hole.on_boundary(p) {
            return true;
        }
        if hole.ray_cast(p) {
            return false;
        }
    }
    true
}

pub fn multipolygon_contains(shape: &[Polygon], p: GeoPoint) -> bool {
    shape.iter().any(|poly| polygon_contains(poly, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractGeometry {
    pub tract_id: String,
    pub shape: Vec<Polygon>,
    pub centroid: GeoPoint,
    bbox: BoundingBox,
}

impl TractGeometry {
    /// Builds a tract and precomputes its centroid.
    pub fn new(tract_id: impl Into<String>, shape: Vec<Polygon>) -> Result<Self> {
        let tract_id = tract_id.into();
        let c = centroid(&shape).map_err(|e| Error::invalid(format!("tract {tract_id}: {e}")))?;
        let bbox = BoundingBox::around(&shape)?;
        Ok(TractGeometry {
            tract_id,
            shape,
            centroid: c,
            bbox,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.bbox.contains(p) && multipolygon_contains(&self.shape, p)
    }

    /// Planar area in square kilometres under the given projection.
    pub fn area_km2(&self, proj: &Projection) -> f64 {
        let scale = proj.meters_per_degree_lon() * proj.meters_per_degree_lat() / 1e6;
        polygons_area(&self.shape) * scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub location: GeoPoint,
    pub tract_id: Option<String>,
}

/// Inclusive linear subdivision of `bbox`, row-major (lat outer, lon inner).
pub fn make_grid(bbox: &BoundingBox, n_lat: usize, n_lon: usize) -> Result<Vec<GridPoint>> {
    BoundingBox::new(bbox.min_lat, bbox.max_lat, bbox.min_lon, bbox.max_lon)?;
    if n_lat < 2 || n_lon < 2 {
        return Err(Error::invalid(format!(
            "grid needs at least 2 points per axis, got {n_lat}x{n_lon}"
        )));
    }
    let lats = linspace(bbox.min_lat, bbox.max_lat, n_lat);
    let lons = linspace(bbox.min_lon, bbox.max_lon, n_lon);
    let mut grid = Vec::with_capacity(n_lat * n_lon);
    for (row, &lat) in lats.iter().enumerate() {
        for (col, &lon) in lons.iter().enumerate() {
            grid.push(GridPoint {
                row,
                col,
                location: GeoPoint { lon, lat },
                tract_id: None,
            });
        }
    }
    Ok(grid)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Keeps the points contained in at least one boundary polygon, in input order.
pub fn clip_grid(grid: &[GridPoint], boundary: &[Polygon]) -> Result<Vec<GridPoint>> {
    if boundary.is_empty() {
        return Err(Error::invalid("clip boundary is empty"));
    }
    let bbox = BoundingBox::around(boundary)?;
    let kept: Vec<GridPoint> = grid
        .iter()
        .filter(|g| bbox.contains(g.location) && multipolygon_contains(boundary, g.location))
        .cloned()
        .collect();
    if kept.is_empty() {
        log::warn!("clipping removed every grid point");
    }
    Ok(kept)
}

fn polygons_area(shape: &[Polygon]) -> f64 {
    shape
        .iter()
        .map(|poly| {
            let ext = poly.exterior.moments().0.abs();
            let holes: f64 = poly.holes.iter().map(|h| h.moments().0.abs()).sum();
            ext - holes
        })
        .sum()
}

/// Area-weighted centroid of a multipolygon; holes subtract area.
pub fn centroid(shape: &[Polygon]) -> Result<GeoPoint> {
    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    let mut accumulate = |ring: &PolygonRing, sign: f64| {
        let (a, x, y) = ring.moments();
        // Orient every ring so exteriors add and holes subtract.
        let orient = if a < 0.0 { -1.0 } else { 1.0 };
        area += sign * orient * a;
        mx += sign * orient * x;
        my += sign * orient * y;
    };
    for poly in shape {
        accumulate(&poly.exterior, 1.0);
        for hole in &poly.holes {
            accumulate(hole, -1.0);
        }
    }
    if !(area > 0.0) {
        return Err(Error::invalid("shape has zero total area"));
    }
    Ok(GeoPoint {
        lon: mx / area,
        lat: my / area,
    })
}

/// Resolves the tract containing `p`.
///
/// A single containing tract wins outright. Several containing tracts
/// (shared edges) resolve to the nearest centroid, then the smaller id.
/// With no containing tract, the nearest centroid is used only if it lies
/// within `snap_radius_m`.
pub fn assign_tract<'a>(
    p: GeoPoint,
    tracts: &'a [TractGeometry],
    proj: &Projection,
    snap_radius_m: f64,
) -> Option<&'a str> {
    let nearest = |candidates: &mut dyn Iterator<Item = &'a TractGeometry>| {
        candidates
            .map(|t| (proj.distance_m(p, t.centroid), t))
            .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.tract_id.cmp(&b.tract_id)))
    };
    let mut containing = tracts.iter().filter(|t| t.contains(p)).peekable();
    if containing.peek().is_some() {
        return nearest(&mut containing).map(|(_, t)| t.tract_id.as_str());
    }
    match nearest(&mut tracts.iter()) {
        Some((d, t)) if d <= snap_radius_m => Some(t.tract_id.as_str()),
        _ => None,
    }
}
