//! The vacancy detector: bin inferred homes onto the grid, assess each
//! residential POI's surrounding cell window, derive the calibration
//! thresholds, rank counties, and compute the two baseline indicators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    cell_of, cell_window, haversine_distance, GeoPoint, GridIndex, GridPopulation,
    ProjectionParams, RegionSet,
};
use crate::ingest::{Poi, PoiCategory};
use crate::locus::HomeWorkAssignment;

/// Site assessment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VacancyParams {
    /// Cell window edge length, odd.
    pub window_k: i64,
    /// Number of most-populated window cells summed.
    pub top_k: usize,
    /// Sums at or above this are Occupied.
    pub upper_threshold: f64,
    /// Sums at or below this are Excluded (recently built or unused data).
    pub lower_threshold: f64,
    /// Residential POIs within this distance of a villa are dropped.
    pub villa_radius: f64,
}

impl Default for VacancyParams {
    fn default() -> Self {
        VacancyParams {
            window_k: 5,
            top_k: 6,
            upper_threshold: 300.0,
            lower_threshold: 60.0,
            villa_radius: 1_000.0,
        }
    }
}

impl VacancyParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_k < 1 || self.window_k % 2 == 0 {
            return Err(Error::parameter(format!(
                "window_k must be odd and >= 1, got {}",
                self.window_k
            )));
        }
        if self.top_k == 0 || self.top_k as i64 > self.window_k * self.window_k {
            return Err(Error::parameter(format!(
                "top_k must be in 1..={} for window_k {}",
                self.window_k * self.window_k,
                self.window_k
            )));
        }
        let bounds_ok = self.lower_threshold.is_finite()
            && self.upper_threshold.is_finite()
            && self.lower_threshold >= 0.0
            && self.lower_threshold < self.upper_threshold;
        if !bounds_ok {
            return Err(Error::parameter(format!(
                "thresholds must satisfy 0 <= lower < upper, got {} and {}",
                self.lower_threshold, self.upper_threshold
            )));
        }
        if !(self.villa_radius.is_finite() && self.villa_radius >= 0.0) {
            return Err(Error::parameter("villa_radius must be >= 0"));
        }
        Ok(())
    }
}

/// Inputs of the capacity calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityParams {
    pub floor_area_ratio: f64,
    /// Square meters per person.
    pub living_area_per_capita: f64,
    /// Users observable in the positioning logs.
    pub sampled_users: f64,
    pub total_population: f64,
    /// Fraction of capacity below which an area counts as vacant.
    pub vacancy_fraction: f64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        CapacityParams {
            floor_area_ratio: 1.0,
            living_area_per_capita: 30.0,
            sampled_users: 7.7e8,
            total_population: 1.36e9,
            vacancy_fraction: 0.25,
        }
    }
}

impl CapacityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.floor_area_ratio,
            self.living_area_per_capita,
            self.sampled_users,
            self.total_population,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::parameter("capacity parameters must all be positive"));
        }
        if !(self.vacancy_fraction.is_finite()
            && self.vacancy_fraction > 0.0
            && self.vacancy_fraction < 1.0)
        {
            return Err(Error::parameter(format!(
                "vacancy_fraction must be in (0, 1), got {}",
                self.vacancy_fraction
            )));
        }
        Ok(())
    }
}

/// Assessment outcome of one residential site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Vacant,
    Occupied,
    Excluded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Vacant => "vacant",
            Verdict::Occupied => "occupied",
            Verdict::Excluded => "excluded",
        };
        f.write_str(s)
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacant" => Ok(Verdict::Vacant),
            "occupied" => Ok(Verdict::Occupied),
            "excluded" => Ok(Verdict::Excluded),
            other => Err(Error::validation(format!(
                "unknown verdict {other:?}, expected vacant|occupied|excluded"
            ))),
        }
    }
}

/// Full assessment of one site, including the ranked window cells.
#[derive(Debug, Clone, PartialEq)]
pub struct VacancyRecord {
    pub poi: Poi,
    pub center_cell: GridIndex,
    /// The top_k (cell, count) pairs, count descending, ties by cell order.
    pub top_cells: Vec<(GridIndex, f64)>,
    pub top_sum: f64,
    pub verdict: Verdict,
}

/// Inputs of the supply-demand baseline indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenIndexInputs {
    pub supply_s: f64,
    pub demand_d: f64,
    pub existing_n: f64,
}

/// Houses-per-km² standard a built area is expected to hold.
pub const DENSITY_STANDARD_PER_KM2: f64 = 10_000.0;

/// Drops residential POIs that sit within `radius` of any villa POI.
/// Villas and other categories are never returned. Villa lookups go
/// through a lat/lon bucket index, so this stays near-linear; the O(n²)
/// filter exists in tests as the oracle.
pub fn exclude_villa_adjacent(pois: &[Poi], radius: f64) -> Result<Vec<Poi>> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::parameter("villa radius must be >= 0"));
    }
    let villas: Vec<GeoPoint> = pois
        .iter()
        .filter(|p| p.category == PoiCategory::Villa)
        .map(|p| p.location)
        .collect();
    let index = PointBuckets::build(&villas, radius.max(1.0));
    Ok(pois
        .iter()
        .filter(|p| p.category == PoiCategory::Residential)
        .filter(|p| !index.any_within(&villas, p.location, radius))
        .cloned()
        .collect())
}

/// Lat/lon hash buckets sized so any point within `radius` of a query is
/// found in the 3x3 surrounding buckets.
struct PointBuckets {
    dlat: f64,
    dlon: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl PointBuckets {
    fn build(points: &[GeoPoint], radius: f64) -> PointBuckets {
        let max_abs_lat = points
            .iter()
            .map(|p| p.lat.abs())
            .fold(0.0f64, f64::max)
            .min(89.9999);
        let dlat = (radius / crate::geo::EARTH_RADIUS_M).to_degrees() * 1.01;
        let dlon = (radius / (crate::geo::EARTH_RADIUS_M * max_abs_lat.to_radians().cos()))
            .to_degrees()
            * 1.01;
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            buckets
                .entry(((p.lat / dlat).floor() as i64, (p.lon / dlon).floor() as i64))
                .or_default()
                .push(k as u32);
        }
        PointBuckets { dlat, dlon, buckets }
    }

    fn any_within(&self, points: &[GeoPoint], q: GeoPoint, radius: f64) -> bool {
        let bi = (q.lat / self.dlat).floor() as i64;
        let bj = (q.lon / self.dlon).floor() as i64;
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(members) = self.buckets.get(&(bi + di, bj + dj)) {
                    for &m in members {
                        if haversine_distance(q, points[m as usize]) <= radius {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Sums each home's weight into its grid cell. Dual-home users contribute
/// to both cells.
pub fn bin_homes(assignments: &[HomeWorkAssignment], proj: &ProjectionParams) -> Result<GridPopulation> {
    proj.validate()?;
    let mut grid = GridPopulation::new();
    for a in assignments {
        for h in &a.homes {
            grid.add(cell_of(h.location, proj), h.weight)?;
        }
    }
    Ok(grid)
}

/// Sharded [`bin_homes`]: per-chunk partial grids merged by commutative
/// addition, so any worker count produces the same totals.
pub fn bin_homes_par(
    assignments: &[HomeWorkAssignment],
    proj: &ProjectionParams,
    workers: usize,
) -> Result<GridPopulation> {
    proj.validate()?;
    let shards = crate::par::par_map_chunks(assignments, workers, |chunk| {
        vec![bin_homes(chunk, proj)]
    });
    let mut grid = GridPopulation::new();
    for shard in shards {
        grid.merge(shard?);
    }
    Ok(grid)
}

/// Assesses one site: rank the window_k² cells around the POI's cell by
/// (count desc, cell order), sum the top_k, and apply the thresholds.
pub fn assess_site(
    poi: &Poi,
    grid: &GridPopulation,
    params: &VacancyParams,
    proj: &ProjectionParams,
) -> Result<VacancyRecord> {
    params.validate()?;
    let center_cell = cell_of(poi.location, proj);
    let mut cells: Vec<(GridIndex, f64)> = cell_window(center_cell, params.window_k)?
        .into_iter()
        .map(|c| (c, grid.count(c)))
        .collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cells.truncate(params.top_k);
    let top_sum: f64 = cells.iter().map(|(_, c)| c).sum();
    let verdict = if top_sum <= params.lower_threshold {
        Verdict::Excluded
    } else if top_sum < params.upper_threshold {
        Verdict::Vacant
    } else {
        Verdict::Occupied
    };
    Ok(VacancyRecord { poi: poi.clone(), center_cell, top_cells: cells, top_sum, verdict })
}

/// Output of the capacity calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestedThreshold {
    pub persons_per_cell: i64,
    pub users_per_cell: i64,
    pub suggested_threshold: i64,
}

/// Derives the calibration chain: cell capacity in persons, then in
/// observable users, then the suggested top-sum threshold.
pub fn derive_suggested_threshold(
    cap: &CapacityParams,
    cell_area_m2: f64,
    top_k: usize,
) -> Result<SuggestedThreshold> {
    cap.validate()?;
    if !(cell_area_m2.is_finite() && cell_area_m2 > 0.0) {
        return Err(Error::parameter("cell area must be positive"));
    }
    let persons = (cap.floor_area_ratio * cell_area_m2 / cap.living_area_per_capita).floor();
    let users = (persons * cap.sampled_users / cap.total_population).floor();
    let suggested = (cap.vacancy_fraction * users * top_k as f64).round();
    Ok(SuggestedThreshold {
        persons_per_cell: persons as i64,
        users_per_cell: users as i64,
        suggested_threshold: suggested as i64,
    })
}

/// Ranking accumulation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    /// Number of Vacant sites per region.
    PoiCount,
    /// Distinct Vacant top-cells per region × cell area, m².
    CellArea,
}

/// One ranking row, also the `region_id,name,value` file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub region_id: String,
    pub name: String,
    pub value: f64,
}

/// Aggregates Vacant records per region, sorted by value descending with
/// region_id breaking ties. Records outside every region are dropped.
pub fn county_ranking(
    records: &[VacancyRecord],
    regions: &RegionSet,
    mode: RankingMode,
    proj: &ProjectionParams,
) -> Result<Vec<RankingRow>> {
    proj.validate()?;
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    let mut cells: BTreeMap<&str, BTreeSet<GridIndex>> = BTreeMap::new();
    for r in records {
        if r.verdict != Verdict::Vacant {
            continue;
        }
        let Some(region) = regions.assign(r.poi.location) else {
            continue;
        };
        match mode {
            RankingMode::PoiCount => {
                *counts.entry(&region.region_id).or_insert(0.0) += 1.0;
            }
            RankingMode::CellArea => {
                let set = cells.entry(&region.region_id).or_default();
                set.extend(r.top_cells.iter().map(|(c, _)| *c));
            }
        }
    }
    if mode == RankingMode::CellArea {
        let cell_area = proj.cell_size * proj.cell_size;
        for (id, set) in cells {
            counts.insert(id, set.len() as f64 * cell_area);
        }
    }
    let mut rows: Vec<RankingRow> = counts
        .into_iter()
        .map(|(id, value)| RankingRow {
            region_id: id.to_string(),
            name: regions.get(id).map(|r| r.name.clone()).unwrap_or_default(),
            value,
        })
        .collect();
    rows.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.region_id.cmp(&b.region_id)));
    Ok(rows)
}

/// Five-year supply-demand balance per existing housing stock: (S - D) / n.
pub fn chen_index(x: &ChenIndexInputs) -> Result<f64> {
    if !(x.existing_n.is_finite() && x.existing_n > 0.0) {
        return Err(Error::parameter(format!(
            "existing stock must be positive, got {}",
            x.existing_n
        )));
    }
    if !x.supply_s.is_finite() || !x.demand_d.is_finite() {
        return Err(Error::parameter("supply and demand must be finite"));
    }
    Ok((x.supply_s - x.demand_d) / x.existing_n)
}

/// True when population density falls strictly below half the built-area
/// standard of 10,000 persons per km².
pub fn density_ghost_flag(population: f64, area_km2: f64) -> Result<bool> {
    if !(area_km2.is_finite() && area_km2 > 0.0) {
        return Err(Error::parameter(format!("area must be positive, got {area_km2} km²")));
    }
    if !(population.is_finite() && population >= 0.0) {
        return Err(Error::parameter(format!("population must be >= 0, got {population}")));
    }
    Ok(population / area_km2 < DENSITY_STANDARD_PER_KM2 / 2.0)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes `poi_name,lat,lon,center_i,center_j,top_sum,verdict` rows.
pub fn write_records<W: io::Write>(records: &[VacancyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.write_record([
            r.poi.name.as_str(),
            &fmt_f64(r.poi.location.lat),
            &fmt_f64(r.poi.location.lon),
            &r.center_cell.i.to_string(),
            &r.center_cell.j.to_string(),
            &fmt_f64(r.top_sum),
            &r.verdict.to_string(),
        ])
        .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the records file; the ranked cells are not persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct VacancyRow {
    pub poi_name: String,
    pub location: GeoPoint,
    pub center_cell: GridIndex,
    pub top_sum: f64,
    pub verdict: Verdict,
}

/// Reads rows written by [`write_records`].
pub fn read_records<R: io::Read>(reader: R) -> Result<Vec<VacancyRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::validation(format!("bad vacancy row: {e}")))?;
        if record.len() != 7 {
            return Err(Error::validation(format!(
                "vacancy row has {} fields, expected 7",
                record.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            record[k]
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("bad number {:?} in vacancy row", &record[k])))
        };
        let int = |k: usize| -> Result<i64> {
            record[k]
                .parse::<i64>()
                .map_err(|_| Error::validation(format!("bad integer {:?} in vacancy row", &record[k])))
        };
        out.push(VacancyRow {
            poi_name: record[0].to_string(),
            location: GeoPoint::new(num(1)?, num(2)?)?,
            center_cell: GridIndex::new(int(3)?, int(4)?),
            top_sum: num(5)?,
            verdict: record[6].parse()?,
        });
    }
    Ok(out)
}

/// Writes `region_id,name,value` ranking rows.
pub fn write_ranking<W: io::Write>(rows: &[RankingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.write_record([r.region_id.as_str(), r.name.as_str(), &fmt_f64(r.value)])
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_ranking`].
pub fn read_ranking<R: io::Read>(reader: R) -> Result<Vec<RankingRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::validation(format!("bad ranking row: {e}")))?;
        if record.len() != 3 {
            return Err(Error::validation(format!(
                "ranking row has {} fields, expected 3",
                record.len()
            )));
        }
        let value = record[2]
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("bad number {:?} in ranking row", &record[2])))?;
        out.push(RankingRow {
            region_id: record[0].to_string(),
            name: record[1].to_string(),
            value,
        });
    }
    Ok(out)
}
