//! Inspection artifacts: dot-density rasters of home and work locations,
//! vacant-cell GeoJSON overlays, and generic delimited tables.
//!
//! Every export is a pure function of its inputs, so repeated runs give
//! byte-identical artifacts.

use std::collections::BTreeSet;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geo::{cell_polygon, GeoPoint, ProjectionParams};
use crate::vacancy::{VacancyRecord, Verdict};

/// Count-to-lightness curve applied per channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// floor(255 * ln(1+c) / ln(1+c_max)); keeps sparse pixels visible
    /// under heavy-tailed counts. Truncation makes count 1 against a
    /// maximum of 9 land on 76.
    #[default]
    Log,
}

/// Geographic frame of a raster. Rows run north to south, columns west to
/// east; pixel height is derived from the bbox aspect in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub bbox_min: GeoPoint,
    pub bbox_max: GeoPoint,
    pub width_px: usize,
    pub scaling: Scaling,
}

impl RasterSpec {
    pub fn new(bbox_min: GeoPoint, bbox_max: GeoPoint, width_px: usize) -> Result<Self> {
        let spec = Self { bbox_min, bbox_max, width_px, scaling: Scaling::Log };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 {
            return Err(Error::parameter("raster width must be at least 1 pixel"));
        }
        self.bbox_min.validate()?;
        self.bbox_max.validate()?;
        if self.bbox_min.lat >= self.bbox_max.lat || self.bbox_min.lon >= self.bbox_max.lon {
            return Err(Error::parameter(format!(
                "degenerate raster bbox ({}, {}) to ({}, {})",
                self.bbox_min.lat, self.bbox_min.lon, self.bbox_max.lat, self.bbox_max.lon
            )));
        }
        Ok(())
    }

    pub fn height_px(&self) -> usize {
        let lat_span = self.bbox_max.lat - self.bbox_min.lat;
        let lon_span = self.bbox_max.lon - self.bbox_min.lon;
        ((self.width_px as f64 * lat_span / lon_span).round() as usize).max(1)
    }

    /// Pixel index of a point, None outside the bbox. Points exactly on
    /// the east and south edges fold into the last column and row.
    fn pixel_of(&self, p: GeoPoint, width: usize, height: usize) -> Option<usize> {
        if p.lat < self.bbox_min.lat
            || p.lat > self.bbox_max.lat
            || p.lon < self.bbox_min.lon
            || p.lon > self.bbox_max.lon
        {
            return None;
        }
        let lat_span = self.bbox_max.lat - self.bbox_min.lat;
        let lon_span = self.bbox_max.lon - self.bbox_min.lon;
        let col = (((p.lon - self.bbox_min.lon) / lon_span * width as f64) as usize).min(width - 1);
        let row =
            (((self.bbox_max.lat - p.lat) / lat_span * height as f64) as usize).min(height - 1);
        Some(row * width + col)
    }
}

fn bin_counts(points: &[GeoPoint], spec: &RasterSpec, width: usize, height: usize) -> Vec<u64> {
    let mut counts = vec![0u64; width * height];
    for &p in points {
        if let Some(px) = spec.pixel_of(p, width, height) {
            counts[px] += 1;
        }
    }
    counts
}

fn lightness(counts: &[u64]) -> Vec<u8> {
    let c_max = counts.iter().copied().max().unwrap_or(0);
    if c_max == 0 {
        return vec![0; counts.len()];
    }
    let denom = (1.0 + c_max as f64).ln();
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0
            } else {
                // Ratio first: c == c_max divides to exactly 1.0, so the
                // brightest pixel always lands on 255.
                (255.0 * ((1.0 + c as f64).ln() / denom)).floor().min(255.0) as u8
            }
        })
        .collect()
}

/// Renders homes into the red channel and work places into the blue
/// channel of a binary PPM (P6, maxval 255). Green stays 0. An empty
/// channel is all-zero; otherwise its brightest pixel is exactly 255.
pub fn render_dot_density(
    homes: &[GeoPoint],
    works: &[GeoPoint],
    spec: &RasterSpec,
) -> Result<Vec<u8>> {
    spec.validate()?;
    let width = spec.width_px;
    let height = spec.height_px();
    let red = lightness(&bin_counts(homes, spec, width, height));
    let blue = lightness(&bin_counts(works, spec, width, height));
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height * 3);
    for px in 0..width * height {
        out.push(red[px]);
        out.push(0);
        out.push(blue[px]);
    }
    Ok(out)
}

/// One closed Polygon feature per distinct top cell of each Vacant
/// record, corners unprojected to lat/lon. Features sort by poi name,
/// then cell order; non-Vacant records contribute nothing.
pub fn export_vacancy_geojson(records: &[VacancyRecord], proj: &ProjectionParams) -> String {
    let mut sorted: Vec<&VacancyRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.poi.name.cmp(&b.poi.name).then(a.center_cell.cmp(&b.center_cell)));
    let mut features = Vec::new();
    for record in sorted {
        if record.verdict != Verdict::Vacant {
            continue;
        }
        let cells: BTreeSet<_> = record.top_cells.iter().map(|(cell, _)| *cell).collect();
        for cell in cells {
            let ring: Vec<[f64; 2]> =
                cell_polygon(cell, proj).into_iter().map(|p| [p.lon, p.lat]).collect();
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "poi_name": record.poi.name,
                    "top_sum": record.top_sum,
                    "verdict": record.verdict.to_string(),
                },
            }));
        }
    }
    json!({"type": "FeatureCollection", "features": features}).to_string()
}

/// Writes a header row then data rows, quoting per RFC 4180. Every row
/// must match the header width.
pub fn export_table(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Internal(e.to_string()))?;
    for (k, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::validation(format!(
                "table row {k} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row).map_err(|e| Error::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Reads a table written by [`export_table`] back into header and rows.
pub fn parse_table<R: io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header: Vec<String> = match records.next() {
        Some(record) => record
            .map_err(|e| Error::validation(format!("bad table header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect(),
        None => return Err(Error::validation("table has no header row")),
    };
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| Error::validation(format!("bad table row: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::validation(format!(
                "table row has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
