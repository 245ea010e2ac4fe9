//! Seeded synthetic worlds with planted labels: positioning logs, POIs,
//! and regions for the pipeline to consume, plus the ground truth and
//! scoring needed to verify what the pipeline recovers.
//!
//! User sub-seeds come from one splitmix64 stream over the world seed, in
//! user creation order (site residents, commuters, travelers, then
//! holiday visitors); each user then draws from its own ChaCha8 stream,
//! so generation is reproducible and parallelizable per user. Fixtures
//! are portable by committing generated files, not by reimplementing the
//! generator.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use chrono::{Days, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{HolidayPair, TourismVerdict};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, Region, RegionLevel, EARTH_RADIUS_M};
use crate::ingest::{Poi, PoiCategory, PositioningPoint, StudyWindow};
use crate::locus::{HomeWorkAssignment, LocusParams, WeightedHome};
use crate::mobility::{migration_edges, CrosstabRow, DayCity, MigrationEdge};
use crate::vacancy::Verdict;

const VISITOR_HOURS: [u32; 7] = [10, 11, 12, 13, 14, 15, 16];
const TRAVEL_HOURS: [u32; 14] = [7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20];
const MORNING_HOURS: [u32; 5] = [7, 8, 9, 10, 11];
const ARRIVAL_HOURS: [u32; 2] = [19, 20];

/// A city polygon, either an axis-aligned `rect` of
/// `[lat_min, lon_min, lat_max, lon_max]` or an explicit `polygon` ring of
/// `[lat, lon]` rows (closed automatically). Exactly one must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySpec {
    pub name: String,
    #[serde(default)]
    pub rect: Option<[f64; 4]>,
    #[serde(default)]
    pub polygon: Option<Vec<[f64; 2]>>,
}

impl CitySpec {
    fn ring(&self) -> Result<Vec<GeoPoint>> {
        match (&self.rect, &self.polygon) {
            (Some(r), None) => {
                if r[0] >= r[2] || r[1] >= r[3] {
                    return Err(Error::validation(format!(
                        "city {} rect has min >= max",
                        self.name
                    )));
                }
                Ok(vec![
                    GeoPoint { lat: r[0], lon: r[1] },
                    GeoPoint { lat: r[0], lon: r[3] },
                    GeoPoint { lat: r[2], lon: r[3] },
                    GeoPoint { lat: r[2], lon: r[1] },
                    GeoPoint { lat: r[0], lon: r[1] },
                ])
            }
            (None, Some(rows)) => {
                let mut ring: Vec<GeoPoint> =
                    rows.iter().map(|p| GeoPoint { lat: p[0], lon: p[1] }).collect();
                if ring.first() != ring.last() {
                    ring.push(ring[0]);
                }
                Ok(ring)
            }
            _ => Err(Error::validation(format!(
                "city {} must set exactly one of rect or polygon",
                self.name
            ))),
        }
    }

    fn region(&self, level: RegionLevel) -> Result<Region> {
        let region = Region {
            region_id: self.name.clone(),
            name: self.name.clone(),
            level,
            tier: None,
            rings: vec![self.ring()?],
        };
        region.validate()?;
        Ok(region)
    }

    /// Where travelers ping while in this city: the vertex centroid,
    /// which must land inside the polygon.
    fn anchor(&self) -> Result<GeoPoint> {
        let region = self.region(RegionLevel::City)?;
        let ring = &region.rings[0];
        let n = (ring.len() - 1) as f64;
        let anchor = GeoPoint {
            lat: ring[..ring.len() - 1].iter().map(|p| p.lat).sum::<f64>() / n,
            lon: ring[..ring.len() - 1].iter().map(|p| p.lon).sum::<f64>() / n,
        };
        if !region.contains(anchor) {
            return Err(Error::validation(format!(
                "city {} centroid falls outside its polygon; use a convex shape",
                self.name
            )));
        }
        Ok(anchor)
    }
}

/// Planted occupancy class of a site; fixes the expected verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteLabel {
    Occupied,
    Vacant,
    ExcludedNew,
}

impl SiteLabel {
    pub fn expected_verdict(self) -> Verdict {
        match self {
            SiteLabel::Occupied => Verdict::Occupied,
            SiteLabel::Vacant => Verdict::Vacant,
            SiteLabel::ExcludedNew => Verdict::Excluded,
        }
    }
}

/// One residential site: a POI at `center` with `residents` users homed
/// around it. The label must budget for commuter homes placed here; the
/// resident count and thresholds are the world author's contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub name: String,
    /// `[lat, lon]`.
    pub center: [f64; 2],
    pub residents: u32,
    pub label: SiteLabel,
    /// When set (must exceed 1), holiday visitors multiply the site's
    /// during-date population to about this factor of its residents.
    #[serde(default)]
    pub tourism_multiplier: Option<f64>,
}

impl SiteSpec {
    fn center_point(&self) -> GeoPoint {
        GeoPoint { lat: self.center[0], lon: self.center[1] }
    }
}

/// Users homed at one site and working at another, pinging both daily.
/// One ping is forced into the 0-5h slot at home so the day's first fix
/// always pins the home city and commuting never reads as migration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommuterSpec {
    pub home_site: String,
    pub work_site: String,
    pub users: u32,
}

/// One itinerary stop: `days` consecutive days whose first fix is in
/// `city`. Cities passed through on the transition day into this leg go
/// in `route_via`; they get one mid-day ping each and must never become a
/// day's city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItineraryLeg {
    pub city: String,
    pub days: u32,
    #[serde(default)]
    pub route_via: Vec<String>,
}

/// Users walking the same itinerary. They ping only between 07:00 and
/// 20:59, so they never acquire a home or work anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelerSpec {
    pub users: u32,
    pub legs: Vec<ItineraryLeg>,
    /// Days after the window start before the first leg begins.
    #[serde(default)]
    pub start_day: u32,
}

impl TravelerSpec {
    fn start_date(&self, window: &StudyWindow) -> NaiveDate {
        window.start_date + Days::new(u64::from(self.start_day))
    }

    /// The per-day city sequence the itinerary plants, used both to drive
    /// generation and to derive expected migration edges.
    fn day_cities(&self, window: &StudyWindow) -> Vec<DayCity> {
        let mut out = Vec::new();
        let mut date = self.start_date(window);
        for leg in &self.legs {
            for _ in 0..leg.days {
                out.push(DayCity { date, city: leg.city.clone() });
                date = date + Days::new(1);
            }
        }
        out
    }
}

/// Full recipe for a synthetic world. All randomness flows from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    pub window: StudyWindow,
    #[serde(default)]
    pub cities: Vec<CitySpec>,
    #[serde(default)]
    pub sites: Vec<SiteSpec>,
    #[serde(default)]
    pub commuters: Vec<CommuterSpec>,
    #[serde(default)]
    pub travelers: Vec<TravelerSpec>,
    /// Drives holiday visitors and must match the classify stage's pairs;
    /// list at least as many as the classifier's positive minimum.
    #[serde(default)]
    pub holiday_pairs: Vec<HolidayPair>,
    #[serde(default = "default_sigma")]
    pub gps_noise_sigma: f64,
    #[serde(default = "default_ping_mean")]
    pub pings_per_day_mean: f64,
}

fn default_sigma() -> f64 {
    30.0
}

fn default_ping_mean() -> f64 {
    8.0
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        StudyWindow::new(
            self.window.start_date,
            self.window.end_date,
            self.window.utc_offset_minutes,
        )?;
        if !self.gps_noise_sigma.is_finite() || self.gps_noise_sigma < 0.0 {
            return Err(Error::parameter("gps_noise_sigma must be finite and >= 0"));
        }
        if !self.pings_per_day_mean.is_finite()
            || self.pings_per_day_mean <= 0.0
            || self.pings_per_day_mean > 1000.0
        {
            return Err(Error::parameter("pings_per_day_mean must be in (0, 1000]"));
        }
        let mut city_names = BTreeSet::new();
        for c in &self.cities {
            if c.name.is_empty() {
                return Err(Error::validation("city name is empty"));
            }
            if !city_names.insert(c.name.as_str()) {
                return Err(Error::validation(format!("duplicate city {}", c.name)));
            }
            c.anchor()?;
        }
        let mut site_names = BTreeSet::new();
        for s in &self.sites {
            if s.name.is_empty() {
                return Err(Error::validation("site name is empty"));
            }
            if !site_names.insert(s.name.as_str()) {
                return Err(Error::validation(format!("duplicate site {}", s.name)));
            }
            s.center_point().validate()?;
            if let Some(m) = s.tourism_multiplier {
                if !m.is_finite() || m <= 1.0 {
                    return Err(Error::validation(format!(
                        "site {} tourism multiplier must exceed 1",
                        s.name
                    )));
                }
            }
        }
        for c in &self.commuters {
            for site in [&c.home_site, &c.work_site] {
                if !site_names.contains(site.as_str()) {
                    return Err(Error::validation(format!("unknown commuter site {site}")));
                }
            }
        }
        let day_count = self.window.days().count() as u64;
        for (ti, t) in self.travelers.iter().enumerate() {
            if t.legs.is_empty() {
                return Err(Error::validation(format!("traveler {ti} has no legs")));
            }
            if !t.legs[0].route_via.is_empty() {
                return Err(Error::validation(format!(
                    "traveler {ti}: the first leg cannot have route_via cities"
                )));
            }
            let mut total = u64::from(t.start_day);
            for leg in &t.legs {
                if leg.days == 0 {
                    return Err(Error::validation(format!(
                        "traveler {ti} has a zero-day leg in {}",
                        leg.city
                    )));
                }
                if leg.route_via.len() > 6 {
                    return Err(Error::validation(format!(
                        "traveler {ti}: at most 6 route_via cities per leg"
                    )));
                }
                for name in std::iter::once(&leg.city).chain(&leg.route_via) {
                    if !city_names.contains(name.as_str()) {
                        return Err(Error::validation(format!("unknown itinerary city {name}")));
                    }
                }
                total += u64::from(leg.days);
            }
            if total > day_count {
                return Err(Error::validation(format!(
                    "traveler {ti} itinerary covers {total} days, window has {day_count}"
                )));
            }
        }
        let has_tourism = self.sites.iter().any(|s| s.tourism_multiplier.is_some());
        if has_tourism && self.holiday_pairs.is_empty() {
            return Err(Error::validation(
                "tourism sites need at least one holiday pair",
            ));
        }
        for pair in &self.holiday_pairs {
            pair.validate()?;
            if pair.before_date < self.window.start_date || pair.during_date > self.window.end_date
            {
                return Err(Error::validation(format!(
                    "holiday pair {} / {} falls outside the study window",
                    pair.before_date, pair.during_date
                )));
            }
        }
        Ok(())
    }
}

/// A user's planted anchors; travelers and visitors have none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueUser {
    pub user_id: String,
    pub home: Option<GeoPoint>,
    pub work: Option<GeoPoint>,
}

/// What the pipeline is expected to recover from a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub site_verdicts: Vec<(String, Verdict)>,
    pub site_tourism: Vec<(String, bool)>,
    pub users: Vec<TrueUser>,
    pub edges: Vec<MigrationEdge>,
}

/// Everything a generated world emits.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub points: Vec<PositioningPoint>,
    pub pois: Vec<Poi>,
    pub regions: Vec<Region>,
    pub truth: GroundTruth,
}

struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Standard normal pair via Box-Muller, scaled to sigma meters.
fn gauss2(rng: &mut ChaCha8Rng, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        return (0.0, 0.0);
    }
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt() * sigma;
    let theta = TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Knuth's product method, floored at one ping per active day.
fn poisson_min1(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    let limit = (-mean).exp();
    let mut k = 0u32;
    let mut p = 1.0;
    loop {
        k += 1;
        p *= rng.random::<f64>();
        if p <= limit {
            break;
        }
    }
    (k - 1).max(1)
}

/// Anchor displaced by (east, north) meters, each axis truncated at six
/// sigma so every point stays within the declared bbox margin.
fn offset_clamped(anchor: GeoPoint, dx_m: f64, dy_m: f64, sigma: f64) -> GeoPoint {
    let bound = 6.0 * sigma;
    let dx = dx_m.clamp(-bound, bound);
    let dy = dy_m.clamp(-bound, bound);
    GeoPoint {
        lat: anchor.lat + (dy / EARTH_RADIUS_M).to_degrees(),
        lon: anchor.lon + (dx / (EARTH_RADIUS_M * anchor.lat.to_radians().cos())).to_degrees(),
    }
}

fn ping_ts(rng: &mut ChaCha8Rng, date: NaiveDate, hours: &[u32], utc_offset_minutes: i32) -> i64 {
    let hour = hours[rng.random_range(0..hours.len())];
    let time = NaiveTime::from_hms_opt(hour, rng.random_range(0..60), rng.random_range(0..60))
        .expect("hour slots are valid");
    crate::time::epoch_from_local(date, time, utc_offset_minutes)
}

/// Generates the world. Points come out sorted by (user_id, timestamp)
/// so written files are order-stable regardless of generation strategy.
pub fn generate(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let sigma = spec.gps_noise_sigma;
    let mean = spec.pings_per_day_mean;
    let offset = spec.window.utc_offset_minutes;
    let locus = LocusParams::default();
    let home_hours = locus.home_window.hours();
    let work_hours = locus.work_window.hours();

    let mut anchors: BTreeMap<&str, GeoPoint> = BTreeMap::new();
    let mut regions = Vec::new();
    for c in &spec.cities {
        anchors.insert(c.name.as_str(), c.anchor()?);
        regions.push(c.region(RegionLevel::City)?);
        regions.push(c.region(RegionLevel::County)?);
    }
    let sites: BTreeMap<&str, &SiteSpec> =
        spec.sites.iter().map(|s| (s.name.as_str(), s)).collect();

    let mut stream = SplitMix64 { state: spec.seed };
    let mut points = Vec::new();
    let mut users = Vec::new();
    let mut edges = Vec::new();

    for (si, site) in spec.sites.iter().enumerate() {
        let center = site.center_point();
        for k in 0..site.residents {
            let user_id = format!("res{si:03}_{k:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(stream.next());
            let (hx, hy) = gauss2(&mut rng, sigma);
            let home = offset_clamped(center, hx, hy, sigma);
            for date in spec.window.days() {
                for _ in 0..poisson_min1(&mut rng, mean) {
                    let timestamp = ping_ts(&mut rng, date, &home_hours, offset);
                    let (gx, gy) = gauss2(&mut rng, sigma);
                    let location = offset_clamped(center, hx + gx, hy + gy, sigma);
                    points.push(PositioningPoint { user_id: user_id.clone(), location, timestamp });
                }
            }
            users.push(TrueUser { user_id, home: Some(home), work: None });
        }
    }

    for (ci, c) in spec.commuters.iter().enumerate() {
        let home_center = sites[c.home_site.as_str()].center_point();
        let work_center = sites[c.work_site.as_str()].center_point();
        for k in 0..c.users {
            let user_id = format!("com{ci:03}_{k:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(stream.next());
            let (hx, hy) = gauss2(&mut rng, sigma);
            let home = offset_clamped(home_center, hx, hy, sigma);
            let (wx, wy) = gauss2(&mut rng, sigma);
            let work = offset_clamped(work_center, wx, wy, sigma);
            for date in spec.window.days() {
                let mut push = |anchor: GeoPoint, ax, ay, ts, rng: &mut ChaCha8Rng| {
                    let (gx, gy) = gauss2(rng, sigma);
                    let location = offset_clamped(anchor, ax + gx, ay + gy, sigma);
                    points.push(PositioningPoint { user_id: user_id.clone(), location, timestamp: ts });
                };
                // The day's first fix is always at home.
                let early = NaiveTime::from_hms_opt(
                    rng.random_range(0..6),
                    rng.random_range(0..60),
                    rng.random_range(0..60),
                )
                .expect("valid early hour");
                let ts = crate::time::epoch_from_local(date, early, offset);
                push(home_center, hx, hy, ts, &mut rng);
                for _ in 0..poisson_min1(&mut rng, mean) {
                    let ts = ping_ts(&mut rng, date, &home_hours, offset);
                    push(home_center, hx, hy, ts, &mut rng);
                }
                for _ in 0..poisson_min1(&mut rng, mean) {
                    let ts = ping_ts(&mut rng, date, &work_hours, offset);
                    push(work_center, wx, wy, ts, &mut rng);
                }
            }
            users.push(TrueUser { user_id, home: Some(home), work: Some(work) });
        }
    }

    for (ti, t) in spec.travelers.iter().enumerate() {
        let day_cities = t.day_cities(&spec.window);
        // Index of the leg each planted day belongs to, plus whether it is
        // the transition day into the next leg.
        let mut day_legs = Vec::new();
        for (li, leg) in t.legs.iter().enumerate() {
            for d in 0..leg.days {
                let transition = d + 1 == leg.days && li + 1 < t.legs.len();
                day_legs.push((li, transition));
            }
        }
        for k in 0..t.users {
            let user_id = format!("trv{ti:03}_{k:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(stream.next());
            for (day, &(li, transition)) in day_cities.iter().zip(&day_legs) {
                let here = anchors[t.legs[li].city.as_str()];
                let mut push = |anchor: GeoPoint, ts, rng: &mut ChaCha8Rng| {
                    let (gx, gy) = gauss2(rng, sigma);
                    let location = offset_clamped(anchor, gx, gy, sigma);
                    points.push(PositioningPoint { user_id: user_id.clone(), location, timestamp: ts });
                };
                if !transition {
                    for _ in 0..poisson_min1(&mut rng, mean) {
                        let ts = ping_ts(&mut rng, day.date, &TRAVEL_HOURS, offset);
                        push(here, ts, &mut rng);
                    }
                    continue;
                }
                let next = &t.legs[li + 1];
                for _ in 0..poisson_min1(&mut rng, mean) {
                    let ts = ping_ts(&mut rng, day.date, &MORNING_HOURS, offset);
                    push(here, ts, &mut rng);
                }
                // One fix per pass-through city, at distinct ascending hours.
                for (ri, via) in next.route_via.iter().enumerate() {
                    let hour = [12 + ri as u32];
                    let ts = ping_ts(&mut rng, day.date, &hour, offset);
                    push(anchors[via.as_str()], ts, &mut rng);
                }
                let ts = ping_ts(&mut rng, day.date, &ARRIVAL_HOURS, offset);
                push(anchors[next.city.as_str()], ts, &mut rng);
            }
            edges.extend(migration_edges(&user_id, &day_cities));
            users.push(TrueUser { user_id, home: None, work: None });
        }
    }

    for (si, site) in spec.sites.iter().enumerate() {
        let Some(m) = site.tourism_multiplier else { continue };
        let center = site.center_point();
        let visitors = (((m - 1.0) * f64::from(site.residents)).round() as u32).max(1);
        for (pi, pair) in spec.holiday_pairs.iter().enumerate() {
            for k in 0..visitors {
                let user_id = format!("vis{si:03}_{pi:02}_{k:05}");
                let mut rng = ChaCha8Rng::seed_from_u64(stream.next());
                for _ in 0..poisson_min1(&mut rng, mean) {
                    let timestamp = ping_ts(&mut rng, pair.during_date, &VISITOR_HOURS, offset);
                    let (gx, gy) = gauss2(&mut rng, sigma);
                    let location = offset_clamped(center, gx, gy, sigma);
                    points.push(PositioningPoint { user_id: user_id.clone(), location, timestamp });
                }
                users.push(TrueUser { user_id, home: None, work: None });
            }
        }
    }

    points.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.timestamp.cmp(&b.timestamp)));
    let pois = spec
        .sites
        .iter()
        .map(|s| Poi {
            name: s.name.clone(),
            location: s.center_point(),
            category: PoiCategory::Residential,
        })
        .collect();
    let truth = GroundTruth {
        site_verdicts: spec
            .sites
            .iter()
            .map(|s| (s.name.clone(), s.label.expected_verdict()))
            .collect(),
        site_tourism: spec
            .sites
            .iter()
            .map(|s| (s.name.clone(), s.tourism_multiplier.is_some()))
            .collect(),
        users,
        edges,
    };
    Ok(World { points, pois, regions, truth })
}

/// Planted users as home/work assignments, for deriving the expected
/// crosstab with the same bucketing code the pipeline uses.
pub fn truth_assignments(truth: &GroundTruth) -> Vec<HomeWorkAssignment> {
    truth
        .users
        .iter()
        .filter_map(|u| {
            u.home.map(|home| HomeWorkAssignment {
                user_id: u.user_id.clone(),
                homes: vec![WeightedHome { location: home, weight: 1.0 }],
                work: u.work,
            })
        })
        .collect()
}

/// Pipeline outputs to be compared against a world's ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectedOutputs {
    pub site_verdicts: Vec<(String, Verdict)>,
    pub tourism: Vec<(String, TourismVerdict)>,
    pub edges: Vec<MigrationEdge>,
    pub crosstab: Vec<CrosstabRow>,
}

/// Recovery metrics. Precision and recall with an empty denominator are
/// vacuously 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub verdict_precision: BTreeMap<String, f64>,
    pub verdict_recall: BTreeMap<String, f64>,
    pub tourism_precision: f64,
    pub tourism_recall: f64,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub edge_f1: f64,
    pub crosstab_l1: f64,
}

impl ScoreReport {
    pub fn is_perfect(&self) -> bool {
        self.verdict_precision.values().all(|&v| v == 1.0)
            && self.verdict_recall.values().all(|&v| v == 1.0)
            && self.tourism_precision == 1.0
            && self.tourism_recall == 1.0
            && self.edge_f1 == 1.0
            && self.crosstab_l1 <= 1e-12
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores detections against truth: per-verdict precision/recall over
/// sites, tourism precision/recall, exact-match migration edge F1, and L1
/// distance between crosstab proportion tables. The truth crosstab comes
/// from [`truth_assignments`] run through the same bucketing as the
/// pipeline.
pub fn score(
    detected: &DetectedOutputs,
    truth: &GroundTruth,
    truth_crosstab: &[CrosstabRow],
) -> Result<ScoreReport> {
    let det_sites: BTreeMap<&str, Verdict> =
        detected.site_verdicts.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let truth_sites: BTreeMap<&str, Verdict> =
        truth.site_verdicts.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    if det_sites.keys().ne(truth_sites.keys()) {
        return Err(Error::validation(
            "detected and truth site sets differ; outputs are from another world",
        ));
    }

    let mut verdict_precision = BTreeMap::new();
    let mut verdict_recall = BTreeMap::new();
    for label in [Verdict::Vacant, Verdict::Occupied, Verdict::Excluded] {
        let tp = det_sites
            .iter()
            .filter(|(name, v)| **v == label && truth_sites[*name] == label)
            .count();
        let det_n = det_sites.values().filter(|&&v| v == label).count();
        let truth_n = truth_sites.values().filter(|&&v| v == label).count();
        verdict_precision.insert(label.to_string(), ratio(tp, det_n));
        verdict_recall.insert(label.to_string(), ratio(tp, truth_n));
    }

    let truth_flags: BTreeMap<&str, bool> =
        truth.site_tourism.iter().map(|(n, f)| (n.as_str(), *f)).collect();
    for (name, _) in &detected.tourism {
        if !truth_flags.contains_key(name.as_str()) {
            return Err(Error::validation(format!("tourism verdict for unknown site {name}")));
        }
    }
    let det_tourism: BTreeSet<&str> = detected
        .tourism
        .iter()
        .filter(|(_, v)| *v == TourismVerdict::Tourism)
        .map(|(n, _)| n.as_str())
        .collect();
    let truth_tourism: BTreeSet<&str> =
        truth_flags.iter().filter(|(_, f)| **f).map(|(n, _)| *n).collect();
    let tp = det_tourism.intersection(&truth_tourism).count();
    let tourism_precision = ratio(tp, det_tourism.len());
    let tourism_recall = ratio(tp, truth_tourism.len());

    let edge_key = |e: &MigrationEdge| {
        (e.user_id.clone(), e.from_city.clone(), e.to_city.clone(), e.arrival_date)
    };
    let mut det_edges: BTreeMap<_, usize> = BTreeMap::new();
    for e in &detected.edges {
        *det_edges.entry(edge_key(e)).or_insert(0) += 1;
    }
    let mut truth_edges: BTreeMap<_, usize> = BTreeMap::new();
    for e in &truth.edges {
        *truth_edges.entry(edge_key(e)).or_insert(0) += 1;
    }
    let tp: usize = det_edges
        .iter()
        .map(|(k, &n)| n.min(truth_edges.get(k).copied().unwrap_or(0)))
        .sum();
    let edge_precision = ratio(tp, detected.edges.len());
    let edge_recall = ratio(tp, truth.edges.len());
    let edge_f1 = if edge_precision + edge_recall == 0.0 {
        0.0
    } else {
        2.0 * edge_precision * edge_recall / (edge_precision + edge_recall)
    };

    let table = |rows: &[CrosstabRow]| -> BTreeMap<(String, String), f64> {
        rows.iter()
            .map(|r| ((r.home_bucket.clone(), r.work_bucket.clone()), r.proportion))
            .collect()
    };
    let det_tab = table(&detected.crosstab);
    let truth_tab = table(truth_crosstab);
    let keys: BTreeSet<_> = det_tab.keys().chain(truth_tab.keys()).collect();
    let crosstab_l1 = keys
        .into_iter()
        .map(|k| {
            (det_tab.get(k).copied().unwrap_or(0.0) - truth_tab.get(k).copied().unwrap_or(0.0))
                .abs()
        })
        .sum();

    Ok(ScoreReport {
        verdict_precision,
        verdict_recall,
        tourism_precision,
        tourism_recall,
        edge_precision,
        edge_recall,
        edge_f1,
        crosstab_l1,
    })
}
