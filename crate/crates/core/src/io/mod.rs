//! File formats: GeoJSON boundaries and tracts, CSV writing with fixed float
//! formatting, and content digests.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Polygon, PolygonRing, TractGeometry};

/// Significant digits used for every float written to CSV.
pub const CSV_SIG_DIGITS: usize = 10;

/// Formats like C's `%.10g`: shortest of fixed or exponent notation, trailing
/// zeros removed. Negative zero prints as `0`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let p = CSV_SIG_DIGITS;
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// [`fmt_sig`] with an empty cell for missing values.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s).map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a header and rows with `\n` line endings and minimal quoting.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

const WGS84_NAMES: [&str; 4] = [
    "urn:ogc:def:crs:OGC:1.3:CRS84",
    "urn:ogc:def:crs:OGC::CRS84",
    "EPSG:4326",
    "urn:ogc:def:crs:EPSG::4326",
];

fn check_crs(doc: &Value) -> Result<()> {
    let Some(crs) = doc.get("crs") else { return Ok(()) };
    let name = crs.pointer("/properties/name").and_then(Value::as_str);
    match name {
        Some(n) if WGS84_NAMES.contains(&n) => Ok(()),
        Some(n) => Err(Error::data(format!("GeoJSON CRS {n:?} is not WGS84; reproject to EPSG:4326"))),
        None => Err(Error::data("GeoJSON crs member has no properties.name")),
    }
}

fn features(doc: &Value) -> Result<Vec<&Value>> {
    match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .map(|a| a.iter().collect())
            .ok_or_else(|| Error::data("FeatureCollection without a features array")),
        Some("Feature") => Ok(vec![doc]),
        Some("Polygon" | "MultiPolygon") => Ok(vec![doc]),
        other => Err(Error::data(format!("unsupported GeoJSON type {other:?}"))),
    }
}

fn ring(v: &Value) -> Result<PolygonRing> {
    let coords = v.as_array().ok_or_else(|| Error::data("ring is not an array"))?;
    let pairs = coords
        .iter()
        .map(|c| match c.as_array().map(Vec::as_slice) {
            Some([lon, lat, ..]) => match (lon.as_f64(), lat.as_f64()) {
                (Some(lon), Some(lat)) => Ok((lon, lat)),
                _ => Err(Error::data("non-numeric coordinate")),
            },
            _ => Err(Error::data("position needs at least two numbers")),
        })
        .collect::<Result<Vec<_>>>()?;
    PolygonRing::from_coords(&pairs).map_err(|e| Error::data(e.to_string()))
}

fn polygon(v: &Value) -> Result<Polygon> {
    let rings = v.as_array().ok_or_else(|| Error::data("polygon coordinates are not an array"))?;
    let (first, rest) = rings.split_first().ok_or_else(|| Error::data("polygon without rings"))?;
    Ok(Polygon::new(ring(first)?, rest.iter().map(ring).collect::<Result<_>>()?))
}

fn geometry_polygons(geom: &Value) -> Result<Vec<Polygon>> {
    let coords = geom.get("coordinates").ok_or_else(|| Error::data("geometry without coordinates"))?;
    match geom.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(vec![polygon(coords)?]),
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| Error::data("MultiPolygon coordinates are not an array"))?
            .iter()
            .map(polygon)
            .collect(),
        other => Err(Error::data(format!("unsupported geometry type {other:?}"))),
    }
}

fn feature_polygons(f: &Value) -> Result<Vec<Polygon>> {
    if f.get("type").and_then(Value::as_str) == Some("Feature") {
        let geom = f.get("geometry").filter(|g| !g.is_null()).ok_or_else(|| Error::data("feature without geometry"))?;
        geometry_polygons(geom)
    } else {
        geometry_polygons(f)
    }
}

/// Every polygon of every feature, as one multipolygon.
pub fn parse_boundary(text: &str) -> Result<Vec<Polygon>> {
    let doc: Value = serde_json::from_str(text)?;
    check_crs(&doc)?;
    let mut out = Vec::new();
    for (i, f) in features(&doc)?.into_iter().enumerate() {
        out.extend(feature_polygons(f).map_err(|e| Error::data(format!("boundary feature {i}: {e}")))?);
    }
    if out.is_empty() {
        return Err(Error::data("boundary has no polygons"));
    }
    Ok(out)
}

pub fn read_boundary(path: &Path) -> Result<Vec<Polygon>> {
    parse_boundary(&read_to_string(path)?).map_err(|e| context(path, e))
}

fn property_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Tract features keyed by `id_property`, sorted by id.
pub fn parse_tracts(text: &str, id_property: &str) -> Result<Vec<TractGeometry>> {
    let doc: Value = serde_json::from_str(text)?;
    check_crs(&doc)?;
    let mut out = Vec::new();
    for (i, f) in features(&doc)?.into_iter().enumerate() {
        let id = f
            .pointer(&format!("/properties/{id_property}"))
            .and_then(property_string)
            .ok_or_else(|| Error::data(format!("tract feature {i} has no {id_property:?} property")))?;
        let shape = feature_polygons(f).map_err(|e| Error::data(format!("tract {id}: {e}")))?;
        out.push(TractGeometry::new(id, shape).map_err(|e| Error::data(e.to_string()))?);
    }
    out.sort_by(|a, b| a.tract_id.cmp(&b.tract_id));
    if let Some(w) = out.windows(2).find(|w| w[0].tract_id == w[1].tract_id) {
        return Err(Error::data(format!("duplicate tract id {:?}", w[0].tract_id)));
    }
    Ok(out)
}

pub fn read_tracts(path: &Path, id_property: &str) -> Result<Vec<TractGeometry>> {
    parse_tracts(&read_to_string(path)?, id_property).map_err(|e| context(path, e))
}

fn context(path: &Path, e: Error) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        Error::Json(j) => Error::Data(format!("{}: {j}", path.display())),
        other => other,
    }
}

fn ring_json(r: &PolygonRing) -> Value {
    Value::Array(r.vertices().iter().map(|p| json!([p.lon, p.lat])).collect())
}

/// GeoJSON geometry for a multipolygon (a Polygon when it has one part).
pub fn geometry_json(shape: &[Polygon]) -> Value {
    let poly = |p: &Polygon| {
        let mut rings = vec![ring_json(&p.exterior)];
        rings.extend(p.holes.iter().map(ring_json));
        Value::Array(rings)
    };
    if let [single] = shape {
        json!({"type": "Polygon", "coordinates": poly(single)})
    } else {
        json!({"type": "MultiPolygon", "coordinates": shape.iter().map(poly).collect::<Vec<_>>()})
    }
}

pub fn feature_json(shape: &[Polygon], properties: Map<String, Value>) -> Value {
    json!({"type": "Feature", "properties": properties, "geometry": geometry_json(shape)})
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}
