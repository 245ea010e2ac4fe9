//! Coordinates, great-circle distance, the fixed 100 m analysis grid, and
//! point-in-region assignment.
//!
//! All gridding runs through one national equirectangular projection with a
//! standard parallel of 35°N. Cell indices are signed integers, totally
//! ordered by (j, i) so every iteration over cells is deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters; fixed so distances reproduce bit-exactly.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::validation(format!("latitude {} out of range", self.lat)));
        }
        if !self.lon.is_finite() || !(-180.0..180.0).contains(&self.lon) {
            return Err(Error::validation(format!("longitude {} out of range", self.lon)));
        }
        Ok(())
    }
}

/// Parameters of the national analysis grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionParams {
    /// Latitude of true scale, degrees.
    pub standard_parallel: f64,
    /// Sphere radius, meters.
    pub earth_radius: f64,
    /// Grid cell edge, meters.
    pub cell_size: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            standard_parallel: 35.0,
            earth_radius: EARTH_RADIUS_M,
            cell_size: 100.0,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::parameter(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if !(self.standard_parallel.is_finite() && self.standard_parallel.abs() < 90.0) {
            return Err(Error::parameter(format!(
                "standard_parallel must satisfy |lat| < 90, got {}",
                self.standard_parallel
            )));
        }
        if !(self.earth_radius.is_finite() && self.earth_radius > 0.0) {
            return Err(Error::parameter(format!(
                "earth_radius must be positive, got {}",
                self.earth_radius
            )));
        }
        Ok(())
    }
}

/// A grid cell address: `i` counts cells east of the prime meridian,
/// `j` counts cells north of the equator. Ordered by (j, i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub i: i64,
    pub j: i64,
}

impl GridIndex {
    pub fn new(i: i64, j: i64) -> Self {
        GridIndex { i, j }
    }
}

impl Ord for GridIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.j, self.i).cmp(&(other.j, other.i))
    }
}

impl PartialOrd for GridIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-cell user weight sums. Absent cells count as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridPopulation {
    counts: BTreeMap<GridIndex, f64>,
}

impl GridPopulation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `weight` to a cell. Negative weights are rejected so the
    /// all-values-nonnegative invariant cannot be violated.
    pub fn add(&mut self, cell: GridIndex, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::validation(format!("cell weight {weight} must be >= 0")));
        }
        *self.counts.entry(cell).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn count(&self, cell: GridIndex) -> f64 {
        self.counts.get(&cell).copied().unwrap_or(0.0)
    }

    /// Cells in (j, i) order.
    pub fn iter(&self) -> impl Iterator<Item = (GridIndex, f64)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    /// Folds another partial count into this one. Addition is commutative,
    /// so merge order cannot change the result for integer-valued weights.
    pub fn merge(&mut self, other: GridPopulation) {
        for (cell, w) in other.counts {
            *self.counts.entry(cell).or_insert(0.0) += w;
        }
    }
}

/// Great-circle distance in meters on the fixed-radius sphere.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * s.sqrt().min(1.0).asin()
}

/// Planar (x, y) meters of a point under the equirectangular projection.
pub fn project(p: GeoPoint, proj: &ProjectionParams) -> (f64, f64) {
    let x = proj.earth_radius * proj.standard_parallel.to_radians().cos() * p.lon.to_radians();
    let y = proj.earth_radius * p.lat.to_radians();
    (x, y)
}

/// Inverse of [`project`].
pub fn unproject(x: f64, y: f64, proj: &ProjectionParams) -> GeoPoint {
    let lon = (x / (proj.earth_radius * proj.standard_parallel.to_radians().cos())).to_degrees();
    let lat = (y / proj.earth_radius).to_degrees();
    GeoPoint { lat, lon }
}

/// The grid cell containing a point.
pub fn cell_of(p: GeoPoint, proj: &ProjectionParams) -> GridIndex {
    let (x, y) = project(p, proj);
    GridIndex {
        i: (x / proj.cell_size).floor() as i64,
        j: (y / proj.cell_size).floor() as i64,
    }
}

/// Geographic center of a cell.
pub fn cell_center(cell: GridIndex, proj: &ProjectionParams) -> GeoPoint {
    let x = (cell.i as f64 + 0.5) * proj.cell_size;
    let y = (cell.j as f64 + 0.5) * proj.cell_size;
    unproject(x, y, proj)
}

/// Closed 5-vertex ring of a cell's corners, counterclockwise from the
/// southwest corner.
pub fn cell_polygon(cell: GridIndex, proj: &ProjectionParams) -> Vec<GeoPoint> {
    let x0 = cell.i as f64 * proj.cell_size;
    let y0 = cell.j as f64 * proj.cell_size;
    let x1 = x0 + proj.cell_size;
    let y1 = y0 + proj.cell_size;
    vec![
        unproject(x0, y0, proj),
        unproject(x1, y0, proj),
        unproject(x1, y1, proj),
        unproject(x0, y1, proj),
        unproject(x0, y0, proj),
    ]
}

/// The k×k block of cells centered on `center`, in (j, i) order.
/// `k` must be odd and at least 1.
pub fn cell_window(center: GridIndex, k: i64) -> Result<Vec<GridIndex>> {
    if k < 1 || k % 2 == 0 {
        return Err(Error::parameter(format!("window size {k} must be odd and >= 1")));
    }
    let h = k / 2;
    let mut out = Vec::with_capacity((k * k) as usize);
    for j in (center.j - h)..=(center.j + h) {
        for i in (center.i - h)..=(center.i + h) {
            out.push(GridIndex { i, j });
        }
    }
    Ok(out)
}

/// Administrative level of a region polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLevel {
    County,
    City,
    Province,
}

impl fmt::Display for RegionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegionLevel::County => "county",
            RegionLevel::City => "city",
            RegionLevel::Province => "province",
        };
        f.write_str(s)
    }
}

impl FromStr for RegionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "county" => Ok(RegionLevel::County),
            "city" => Ok(RegionLevel::City),
            "province" => Ok(RegionLevel::Province),
            other => Err(Error::validation(format!(
                "unknown region level {other:?}, expected county|city|province"
            ))),
        }
    }
}

/// A named administrative region bounded by one or more simple rings.
/// Containment is even-odd over all rings, so additional rings subtract
/// (holes) or add (exclaves) area symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub name: String,
    pub level: RegionLevel,
    pub tier: Option<i64>,
    pub rings: Vec<Vec<GeoPoint>>,
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        if self.rings.is_empty() {
            return Err(Error::validation(format!(
                "region {} has no rings",
                self.region_id
            )));
        }
        for ring in &self.rings {
            if ring.len() < 4 {
                return Err(Error::validation(format!(
                    "region {} has a ring with {} vertices, need >= 4",
                    self.region_id,
                    ring.len()
                )));
            }
            if ring.first() != ring.last() {
                return Err(Error::validation(format!(
                    "region {} has an unclosed ring",
                    self.region_id
                )));
            }
            for p in ring {
                p.validate()?;
            }
        }
        Ok(())
    }

    /// (min_lat, min_lon, max_lat, max_lon) over all rings.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for ring in &self.rings {
            for p in ring {
                b.0 = b.0.min(p.lat);
                b.1 = b.1.min(p.lon);
                b.2 = b.2.max(p.lat);
                b.3 = b.3.max(p.lon);
            }
        }
        b
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        point_in_rings(p, &self.rings)
    }
}

/// True if `p` lies on the closed segment a-b.
fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if cross != 0.0 {
        return false;
    }
    let dot = (p.lon - a.lon) * (b.lon - a.lon) + (p.lat - a.lat) * (b.lat - a.lat);
    let len2 = (b.lon - a.lon).powi(2) + (b.lat - a.lat).powi(2);
    dot >= 0.0 && dot <= len2
}

/// Even-odd ray casting over every ring. Boundary points count as inside,
/// which the region tie-break then resolves deterministically.
pub fn point_in_rings(p: GeoPoint, rings: &[Vec<GeoPoint>]) -> bool {
    let mut inside = false;
    for ring in rings {
        // The ring is closed; skip the duplicated last vertex.
        let n = ring.len() - 1;
        for k in 0..n {
            let a = ring[k];
            let b = ring[k + 1];
            if on_segment(p, a, b) {
                return true;
            }
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let t = (p.lat - a.lat) / (b.lat - a.lat);
                let x = a.lon + t * (b.lon - a.lon);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Region containing `p`, ties broken by lowest region_id; none if outside
/// every region.
pub fn assign_region<'a>(p: GeoPoint, regions: &'a [Region]) -> Option<&'a str> {
    regions
        .iter()
        .filter(|r| r.contains(p))
        .map(|r| r.region_id.as_str())
        .min()
}

/// Regions of one administrative level indexed for repeated point queries.
/// Regions are held in ascending region_id order with precomputed bounding
/// boxes, so the first bbox-passing hit is already the tie-break winner.
#[derive(Debug, Clone)]
pub struct RegionSet {
    regions: Vec<Region>,
    bboxes: Vec<(f64, f64, f64, f64)>,
}

impl RegionSet {
    pub fn new(mut regions: Vec<Region>, level: RegionLevel) -> Result<Self> {
        regions.retain(|r| r.level == level);
        for r in &regions {
            r.validate()?;
        }
        regions.sort_by(|a, b| a.region_id.cmp(&b.region_id));
        let bboxes = regions.iter().map(Region::bbox).collect();
        Ok(RegionSet { regions, bboxes })
    }

    pub fn assign(&self, p: GeoPoint) -> Option<&Region> {
        for (r, b) in self.regions.iter().zip(&self.bboxes) {
            if p.lat < b.0 || p.lon < b.1 || p.lat > b.2 || p.lon > b.3 {
                continue;
            }
            if r.contains(p) {
                return Some(r);
            }
        }
        None
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn get(&self, region_id: &str) -> Option<&Region> {
        self.regions
            .binary_search_by(|r| r.region_id.as_str().cmp(region_id))
            .ok()
            .map(|k| &self.regions[k])
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

fn ring_from_json(v: &serde_json::Value) -> Result<Vec<GeoPoint>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::validation("polygon ring is not an array"))?;
    let mut ring = Vec::with_capacity(arr.len());
    for pos in arr {
        let xy = pos
            .as_array()
            .ok_or_else(|| Error::validation("ring position is not an array"))?;
        if xy.len() < 2 {
            return Err(Error::validation("ring position has fewer than 2 numbers"));
        }
        let lon = xy[0]
            .as_f64()
            .ok_or_else(|| Error::validation("ring longitude is not a number"))?;
        let lat = xy[1]
            .as_f64()
            .ok_or_else(|| Error::validation("ring latitude is not a number"))?;
        ring.push(GeoPoint { lat, lon });
    }
    Ok(ring)
}

fn prop_str(props: &serde_json::Value, key: &str, idx: usize) -> Result<String> {
    props[key]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::validation(format!("feature {idx} missing string property {key:?}")))
}

/// Parses a GeoJSON FeatureCollection of Polygon/MultiPolygon features with
/// `region_id`, `name`, `level`, and optional `tier` properties.
pub fn parse_regions_geojson(text: &str) -> Result<Vec<Region>> {
    let v: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::validation(format!("region file is not valid JSON: {e}")))?;
    if v["type"] != "FeatureCollection" {
        return Err(Error::validation("region file is not a GeoJSON FeatureCollection"));
    }
    let features = v["features"]
        .as_array()
        .ok_or_else(|| Error::validation("FeatureCollection has no features array"))?;
    let mut out = Vec::with_capacity(features.len());
    for (idx, feat) in features.iter().enumerate() {
        let props = &feat["properties"];
        let region_id = prop_str(props, "region_id", idx)?;
        let name = prop_str(props, "name", idx)?;
        let level: RegionLevel = prop_str(props, "level", idx)?.parse()?;
        let tier = props["tier"].as_i64();
        let geom = &feat["geometry"];
        let coords = &geom["coordinates"];
        let rings = match geom["type"].as_str() {
            Some("Polygon") => {
                let polys = coords
                    .as_array()
                    .ok_or_else(|| Error::validation("Polygon coordinates are not an array"))?;
                polys.iter().map(ring_from_json).collect::<Result<Vec<_>>>()?
            }
            Some("MultiPolygon") => {
                let mut rings = Vec::new();
                let multis = coords.as_array().ok_or_else(|| {
                    Error::validation("MultiPolygon coordinates are not an array")
                })?;
                for poly in multis {
                    let sub = poly
                        .as_array()
                        .ok_or_else(|| Error::validation("MultiPolygon member is not an array"))?;
                    for ring in sub {
                        rings.push(ring_from_json(ring)?);
                    }
                }
                rings
            }
            other => {
                return Err(Error::validation(format!(
                    "feature {idx} geometry type {other:?} is not Polygon or MultiPolygon"
                )));
            }
        };
        let region = Region { region_id, name, level, tier, rings };
        region.validate()?;
        out.push(region);
    }
    Ok(out)
}

fn ring_to_json(ring: &[GeoPoint]) -> serde_json::Value {
    serde_json::Value::Array(
        ring.iter()
            .map(|p| serde_json::json!([p.lon, p.lat]))
            .collect(),
    )
}

/// Serializes regions back to a GeoJSON FeatureCollection. Single-ring
/// regions become Polygons, multi-ring regions MultiPolygons with one ring
/// per member, which is equivalent under even-odd containment.
pub fn write_regions_geojson(regions: &[Region]) -> String {
    let features: Vec<serde_json::Value> = regions
        .iter()
        .map(|r| {
            let geometry = if r.rings.len() == 1 {
                serde_json::json!({
                    "type": "Polygon",
                    "coordinates": [ring_to_json(&r.rings[0])],
                })
            } else {
                serde_json::json!({
                    "type": "MultiPolygon",
                    "coordinates": r.rings.iter().map(|ring| serde_json::json!([ring_to_json(ring)])).collect::<Vec<_>>(),
                })
            };
            let mut props = serde_json::json!({
                "region_id": r.region_id,
                "name": r.name,
                "level": r.level.to_string(),
            });
            if let Some(t) = r.tier {
                props["tier"] = serde_json::json!(t);
            }
            serde_json::json!({
                "type": "Feature",
                "properties": props,
                "geometry": geometry,
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    }))
    .expect("GeoJSON serialization cannot fail")
}
