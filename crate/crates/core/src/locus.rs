//! Home and work location inference via density-based clustering of
//! time-windowed fixes.
//!
//! Points are processed in (timestamp, input order) sequence, so border
//! points always join the earliest-discovered cluster and results are
//! reproducible across runs and worker counts.

use std::collections::{HashMap, VecDeque};
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_distance, GeoPoint};
use crate::ingest::PositioningPoint;
use crate::time::{local_hour, HourWindow};

/// Density clustering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbscanParams {
    /// Neighborhood radius, meters.
    pub eps: f64,
    /// Minimum neighborhood size (including the point itself) to be core.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 200.0, min_pts: 2 }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::parameter(format!("eps must be positive, got {}", self.eps)));
        }
        if self.min_pts < 1 {
            return Err(Error::parameter("min_pts must be at least 1"));
        }
        Ok(())
    }
}

/// A location fix with its timestamp; the per-user unit of clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub location: GeoPoint,
    /// Epoch seconds UTC.
    pub timestamp: i64,
}

impl From<&PositioningPoint> for TimedPoint {
    fn from(p: &PositioningPoint) -> Self {
        TimedPoint { location: p.location, timestamp: p.timestamp }
    }
}

/// One density cluster. Members are original input indices, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub member_indices: Vec<usize>,
    /// Arithmetic mean of member latitudes and longitudes.
    pub centroid: GeoPoint,
    /// Earliest member timestamp.
    pub first_timestamp: i64,
}

impl Cluster {
    fn from_members(mut members: Vec<u32>, points: &[TimedPoint]) -> Cluster {
        members.sort_unstable();
        let n = members.len() as f64;
        let mut lat = 0.0;
        let mut lon = 0.0;
        let mut first = i64::MAX;
        for &m in &members {
            let p = &points[m as usize];
            lat += p.location.lat;
            lon += p.location.lon;
            first = first.min(p.timestamp);
        }
        Cluster {
            member_indices: members.into_iter().map(|m| m as usize).collect(),
            centroid: GeoPoint { lat: lat / n, lon: lon / n },
            first_timestamp: first,
        }
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    /// Last minus first member timestamp, seconds.
    pub fn time_span(&self, points: &[TimedPoint]) -> i64 {
        let mut min = i64::MAX;
        let mut max = i64::MIN;
        for &m in &self.member_indices {
            min = min.min(points[m].timestamp);
            max = max.max(points[m].timestamp);
        }
        max - min
    }
}

/// Hash-bucket index over latitude/longitude at eps resolution. A probe
/// scans the 3x3 surrounding buckets and filters by exact haversine
/// distance. Bucket edges are sized from the sample's maximum |latitude|
/// so no true neighbor can fall outside the probe. Longitude is keyed
/// raw, so neighborhoods straddling the antimeridian are not supported.
struct BucketIndex {
    dlat: f64,
    dlon: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl BucketIndex {
    fn build(points: &[TimedPoint], eps: f64) -> BucketIndex {
        let max_abs_lat = points
            .iter()
            .map(|p| p.location.lat.abs())
            .fold(0.0f64, f64::max)
            .min(89.9999);
        let dlat = (eps / crate::geo::EARTH_RADIUS_M).to_degrees() * 1.01;
        let dlon = (eps / (crate::geo::EARTH_RADIUS_M * max_abs_lat.to_radians().cos()))
            .to_degrees()
            * 1.01;
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            buckets
                .entry(Self::key(p.location, dlat, dlon))
                .or_default()
                .push(k as u32);
        }
        BucketIndex { dlat, dlon, buckets }
    }

    fn key(p: GeoPoint, dlat: f64, dlon: f64) -> (i64, i64) {
        ((p.lat / dlat).floor() as i64, (p.lon / dlon).floor() as i64)
    }

    /// Indices within eps of point `k`, including `k` itself, ascending.
    fn neighbors(&self, points: &[TimedPoint], k: usize, eps: f64) -> Vec<u32> {
        let center = points[k].location;
        let (bi, bj) = Self::key(center, self.dlat, self.dlon);
        let mut out = Vec::new();
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(members) = self.buckets.get(&(bi + di, bj + dj)) {
                    for &m in members {
                        if haversine_distance(center, points[m as usize].location) <= eps {
                            out.push(m);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// The (timestamp, input index) processing permutation.
fn processing_order(points: &[TimedPoint]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..points.len() as u32).collect();
    order.sort_by_key(|&k| (points[k as usize].timestamp, k));
    order
}

/// Density clustering with the haversine metric. Returns clusters in
/// discovery order plus the noise index set (ascending).
pub fn dbscan(points: &[TimedPoint], params: &DbscanParams) -> Result<(Vec<Cluster>, Vec<usize>)> {
    params.validate()?;
    let n = points.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let index = BucketIndex::build(points, params.eps);
    let order = processing_order(points);

    const UNASSIGNED: u32 = u32::MAX;
    let mut cluster_of = vec![UNASSIGNED; n];
    let mut visited = vec![false; n];
    let mut raw_clusters: Vec<Vec<u32>> = Vec::new();
    let mut queue: VecDeque<u32> = VecDeque::new();

    for &start in &order {
        let start = start as usize;
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let nbrs = index.neighbors(points, start, params.eps);
        if nbrs.len() < params.min_pts {
            // Tentative noise; a later cluster may still claim it as border.
            continue;
        }
        let cid = raw_clusters.len() as u32;
        raw_clusters.push(vec![start as u32]);
        cluster_of[start] = cid;
        queue.clear();
        queue.extend(nbrs);
        while let Some(q) = queue.pop_front() {
            let qi = q as usize;
            if cluster_of[qi] == UNASSIGNED {
                cluster_of[qi] = cid;
                raw_clusters[cid as usize].push(q);
            } else if cluster_of[qi] != cid {
                continue;
            }
            if visited[qi] {
                continue;
            }
            visited[qi] = true;
            let qn = index.neighbors(points, qi, params.eps);
            if qn.len() >= params.min_pts {
                queue.extend(qn);
            }
        }
    }

    let clusters = raw_clusters
        .into_iter()
        .map(|members| Cluster::from_members(members, points))
        .collect();
    let noise = (0..n).filter(|&k| cluster_of[k] == UNASSIGNED).collect();
    Ok((clusters, noise))
}

/// Brute-force reference: O(n²) distances, explicit core flags, transitive
/// closure of core reachability, border points claimed by the component
/// whose earliest-processed core comes first. Verification tests pin
/// [`dbscan`] against this on random instances.
pub fn dbscan_reference(
    points: &[TimedPoint],
    params: &DbscanParams,
) -> Result<(Vec<Cluster>, Vec<usize>)> {
    params.validate()?;
    let n = points.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| {
                    haversine_distance(points[a].location, points[b].location) <= params.eps
                })
                .collect()
        })
        .collect();
    let core: Vec<bool> = adj.iter().map(|nb| nb.len() >= params.min_pts).collect();

    // Union-find over cores.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for a in 0..n {
        if !core[a] {
            continue;
        }
        for &b in &adj[a] {
            if core[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
    }

    // Position of each point in the processing sequence.
    let order = processing_order(points);
    let mut pos = vec![0usize; n];
    for (p, &k) in order.iter().enumerate() {
        pos[k as usize] = p;
    }

    // Components keyed by root; build order is the min core position.
    let mut component_min_pos: HashMap<usize, usize> = HashMap::new();
    for k in 0..n {
        if core[k] {
            let root = find(&mut parent, k);
            let e = component_min_pos.entry(root).or_insert(usize::MAX);
            *e = (*e).min(pos[k]);
        }
    }
    let mut roots: Vec<(usize, usize)> = component_min_pos.iter().map(|(r, p)| (*p, *r)).collect();
    roots.sort_unstable();
    let cluster_id_of_root: HashMap<usize, usize> =
        roots.iter().enumerate().map(|(cid, (_, r))| (*r, cid)).collect();

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); roots.len()];
    let mut noise = Vec::new();
    for k in 0..n {
        if core[k] {
            let cid = cluster_id_of_root[&find(&mut parent, k)];
            members[cid].push(k as u32);
        } else {
            // Border point: earliest-built adjacent component claims it.
            let claim = adj[k]
                .iter()
                .filter(|&&b| core[b])
                .map(|&b| {
                    let root = find(&mut parent, b);
                    (component_min_pos[&root], cluster_id_of_root[&root])
                })
                .min();
            match claim {
                Some((_, cid)) => members[cid].push(k as u32),
                None => noise.push(k),
            }
        }
    }
    let clusters = members
        .into_iter()
        .map(|m| Cluster::from_members(m, points))
        .collect();
    Ok((clusters, noise))
}

/// Inference parameters shared by home and work extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocusParams {
    pub dbscan: DbscanParams,
    /// Hours treated as at-home presence.
    pub home_window: HourWindow,
    /// Hours treated as at-work presence.
    pub work_window: HourWindow,
    /// Second cluster qualifies as a second home at this fraction of the
    /// largest cluster's size.
    pub dual_home_ratio: f64,
    /// Minimum separation between two homes, meters.
    pub dual_home_min_separation: f64,
    pub utc_offset_minutes: i32,
}

impl Default for LocusParams {
    fn default() -> Self {
        LocusParams {
            dbscan: DbscanParams::default(),
            home_window: HourWindow { start: 21, end: 6 },
            work_window: HourWindow { start: 9, end: 18 },
            dual_home_ratio: 0.6,
            dual_home_min_separation: 1_000.0,
            utc_offset_minutes: crate::time::DEFAULT_UTC_OFFSET_MINUTES,
        }
    }
}

impl LocusParams {
    pub fn validate(&self) -> Result<()> {
        self.dbscan.validate()?;
        self.home_window.validate()?;
        self.work_window.validate()?;
        if !(self.dual_home_ratio.is_finite() && (0.0..=1.0).contains(&self.dual_home_ratio)) {
            return Err(Error::parameter(format!(
                "dual_home_ratio must be in [0, 1], got {}",
                self.dual_home_ratio
            )));
        }
        if !(self.dual_home_min_separation.is_finite() && self.dual_home_min_separation >= 0.0) {
            return Err(Error::parameter("dual_home_min_separation must be >= 0"));
        }
        Ok(())
    }
}

/// A home anchor and the weight it contributes to grid binning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedHome {
    pub location: GeoPoint,
    pub weight: f64,
}

/// Inferred anchors of one user: one or two homes, optional work place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeWorkAssignment {
    pub user_id: String,
    pub homes: Vec<WeightedHome>,
    pub work: Option<GeoPoint>,
}

impl HomeWorkAssignment {
    pub fn validate(&self) -> Result<()> {
        if self.homes.is_empty() || self.homes.len() > 2 {
            return Err(Error::validation(format!(
                "user {} has {} homes, need 1 or 2",
                self.user_id,
                self.homes.len()
            )));
        }
        if self.homes.len() == 2 {
            let d = haversine_distance(self.homes[0].location, self.homes[1].location);
            if d <= 1.0 {
                return Err(Error::validation(format!(
                    "user {} has two homes only {d:.1} m apart",
                    self.user_id
                )));
            }
        }
        Ok(())
    }

    /// The larger-cluster home.
    pub fn primary_home(&self) -> GeoPoint {
        self.homes[0].location
    }
}

/// Clusters the points inside an hour window and returns summaries sorted
/// by (size desc, time span desc, centroid (lat, lon) asc).
fn ranked_window_clusters(
    points: &[TimedPoint],
    window: HourWindow,
    params: &LocusParams,
) -> Result<Vec<(Cluster, usize)>> {
    let filtered: Vec<TimedPoint> = points
        .iter()
        .filter(|p| window.contains(local_hour(p.timestamp, params.utc_offset_minutes)))
        .copied()
        .collect();
    let (clusters, _) = dbscan(&filtered, &params.dbscan)?;
    let mut ranked: Vec<(Cluster, usize)> = clusters
        .into_iter()
        .map(|c| {
            let span = c.time_span(&filtered) as usize;
            (c, span)
        })
        .collect();
    ranked.sort_by(|(a, sa), (b, sb)| {
        b.member_indices
            .len()
            .cmp(&a.member_indices.len())
            .then(sb.cmp(sa))
            .then(a.centroid.lat.total_cmp(&b.centroid.lat))
            .then(a.centroid.lon.total_cmp(&b.centroid.lon))
    });
    Ok(ranked)
}

/// Home location(s) of one user's points: centroid of the largest
/// home-window cluster, plus the second-largest cluster's centroid when it
/// holds at least `dual_home_ratio` of the largest's points and sits more
/// than `dual_home_min_separation` away. Empty when nothing clusters.
pub fn infer_home(points: &[TimedPoint], params: &LocusParams) -> Result<Vec<GeoPoint>> {
    params.validate()?;
    let ranked = ranked_window_clusters(points, params.home_window, params)?;
    let Some((largest, _)) = ranked.first() else {
        return Ok(Vec::new());
    };
    let mut homes = vec![largest.centroid];
    if let Some((second, _)) = ranked.get(1) {
        let qualifies = second.member_indices.len() as f64
            >= params.dual_home_ratio * largest.member_indices.len() as f64
            && haversine_distance(largest.centroid, second.centroid)
                > params.dual_home_min_separation;
        if qualifies {
            homes.push(second.centroid);
        }
    }
    Ok(homes)
}

/// Work location: centroid of the largest work-window cluster, if any.
pub fn infer_work(points: &[TimedPoint], params: &LocusParams) -> Result<Option<GeoPoint>> {
    params.validate()?;
    let ranked = ranked_window_clusters(points, params.work_window, params)?;
    Ok(ranked.into_iter().next().map(|(c, _)| c.centroid))
}

/// Full anchor inference for one user. Users with no home cluster are
/// excluded downstream, so this returns none for them even if a work
/// cluster exists.
pub fn infer_user(
    user_id: &str,
    points: &[TimedPoint],
    params: &LocusParams,
) -> Result<Option<HomeWorkAssignment>> {
    let homes = infer_home(points, params)?;
    if homes.is_empty() {
        return Ok(None);
    }
    let work = infer_work(points, params)?;
    Ok(Some(HomeWorkAssignment {
        user_id: user_id.to_string(),
        homes: homes
            .into_iter()
            .map(|location| WeightedHome { location, weight: 1.0 })
            .collect(),
        work,
    }))
}

/// Groups a parsed log by user, sorted by user_id, each user's points in
/// input order.
pub fn group_by_user(points: Vec<PositioningPoint>) -> Vec<(String, Vec<TimedPoint>)> {
    let mut map: HashMap<String, Vec<TimedPoint>> = HashMap::new();
    for p in points {
        let t = TimedPoint { location: p.location, timestamp: p.timestamp };
        map.entry(p.user_id).or_default().push(t);
    }
    let mut groups: Vec<(String, Vec<TimedPoint>)> = map.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    groups
}

/// Runs per-user inference across `workers` threads. Output is ordered by
/// user_id and byte-identical for any worker count.
pub fn infer_all(
    groups: &[(String, Vec<TimedPoint>)],
    params: &LocusParams,
    workers: usize,
) -> Result<Vec<HomeWorkAssignment>> {
    params.validate()?;
    let results = crate::par::par_map_chunks(groups, workers, |chunk| {
        chunk
            .iter()
            .map(|(uid, pts)| infer_user(uid, pts, params))
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        if let Some(a) = r? {
            out.push(a);
        }
    }
    Ok(out)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes the ragged anchor table:
/// `user_id,home_lat,home_lon,home_weight[,home2_lat,home2_lon,home2_weight][,work_lat,work_lon]`.
pub fn write_assignments<W: io::Write>(assignments: &[HomeWorkAssignment], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for a in assignments {
        a.validate()?;
        let mut row: Vec<String> = vec![a.user_id.clone()];
        for h in &a.homes {
            row.push(fmt_f64(h.location.lat));
            row.push(fmt_f64(h.location.lon));
            row.push(fmt_f64(h.weight));
        }
        if let Some(work) = a.work {
            row.push(fmt_f64(work.lat));
            row.push(fmt_f64(work.lon));
        }
        w.write_record(&row).map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the table written by [`write_assignments`]. Row width decides the
/// shape: 4 home only, 6 home + work, 7 two homes, 9 two homes + work.
pub fn read_assignments<R: io::Read>(reader: R) -> Result<Vec<HomeWorkAssignment>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::validation(format!("bad anchor row: {e}")))?;
        let fields: Vec<&str> = record.iter().collect();
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::validation(format!("bad number {s:?} in anchor table")))
        };
        let (home2, work_at) = match fields.len() {
            4 => (false, None),
            6 => (false, Some(4)),
            7 => (true, None),
            9 => (true, Some(7)),
            n => {
                return Err(Error::validation(format!(
                    "anchor row has {n} fields, expected 4, 6, 7, or 9"
                )));
            }
        };
        let mut homes = vec![WeightedHome {
            location: GeoPoint::new(parse(fields[1])?, parse(fields[2])?)?,
            weight: parse(fields[3])?,
        }];
        if home2 {
            homes.push(WeightedHome {
                location: GeoPoint::new(parse(fields[4])?, parse(fields[5])?)?,
                weight: parse(fields[6])?,
            });
        }
        let work = match work_at {
            Some(k) => Some(GeoPoint::new(parse(fields[k])?, parse(fields[k + 1])?)?),
            None => None,
        };
        let a = HomeWorkAssignment { user_id: fields[0].to_string(), homes, work };
        a.validate()?;
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{epoch_from_local, DEFAULT_UTC_OFFSET_MINUTES};
    use chrono::{NaiveDate, NaiveTime};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tp(lat: f64, lon: f64, timestamp: i64) -> TimedPoint {
        TimedPoint { location: GeoPoint { lat, lon }, timestamp }
    }

    /// Offsets in meters from a base point, converted via small arcs.
    fn tp_m(north_m: f64, east_m: f64, timestamp: i64) -> TimedPoint {
        let base = GeoPoint { lat: 30.0, lon: 110.0 };
        let dlat = (north_m / crate::geo::EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (crate::geo::EARTH_RADIUS_M * base.lat.to_radians().cos())).to_degrees();
        tp(base.lat + dlat, base.lon + dlon, timestamp)
    }

    #[test]
    fn empty_and_singleton() {
        let p = DbscanParams::default();
        let (c, n) = dbscan(&[], &p).unwrap();
        assert!(c.is_empty() && n.is_empty());
        let (c, n) = dbscan(&[tp(30.0, 110.0, 0)], &p).unwrap();
        assert!(c.is_empty());
        assert_eq!(n, vec![0]);
        // min_pts = 1 makes a lone point its own cluster.
        let (c, n) = dbscan(&[tp(30.0, 110.0, 0)], &DbscanParams { eps: 200.0, min_pts: 1 }).unwrap();
        assert_eq!(c.len(), 1);
        assert!(n.is_empty());
    }

    #[test]
    fn pair_clusters_far_point_is_noise() {
        let pts = vec![tp_m(0.0, 0.0, 0), tp_m(0.0, 150.0, 1), tp_m(5_000.0, 0.0, 2)];
        let (c, n) = dbscan(&pts, &DbscanParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_indices, vec![0, 1]);
        assert_eq!(n, vec![2]);
        assert_eq!(c[0].first_timestamp, 0);
    }

    #[test]
    fn chain_reaches_through_middle_core() {
        // A-B 150 m, B-C 150 m, A-C 300 m: all connected through B.
        let pts = vec![tp_m(0.0, 0.0, 0), tp_m(0.0, 150.0, 1), tp_m(0.0, 300.0, 2)];
        let (c, n) = dbscan(&pts, &DbscanParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_indices, vec![0, 1, 2]);
        assert!(n.is_empty());
    }

    #[test]
    fn centroid_inside_member_bounding_box() {
        let pts = vec![
            tp_m(0.0, 0.0, 0),
            tp_m(50.0, 50.0, 1),
            tp_m(100.0, 0.0, 2),
            tp_m(0.0, 100.0, 3),
        ];
        let (c, _) = dbscan(&pts, &DbscanParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        let lats: Vec<f64> = pts.iter().map(|p| p.location.lat).collect();
        let lons: Vec<f64> = pts.iter().map(|p| p.location.lon).collect();
        let cen = c[0].centroid;
        assert!(cen.lat >= lats.iter().cloned().fold(f64::MAX, f64::min));
        assert!(cen.lat <= lats.iter().cloned().fold(f64::MIN, f64::max));
        assert!(cen.lon >= lons.iter().cloned().fold(f64::MAX, f64::min));
        assert!(cen.lon <= lons.iter().cloned().fold(f64::MIN, f64::max));
    }

    fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<TimedPoint> {
        let n = rng.random_range(0..=max_n);
        let centers: Vec<(f64, f64)> = (0..rng.random_range(1..6))
            .map(|_| (rng.random_range(0.0..2_000.0), rng.random_range(0.0..2_000.0)))
            .collect();
        (0..n)
            .map(|_| {
                let t = rng.random_range(0..1_000_000);
                if rng.random_range(0..100) < 80 {
                    let (cy, cx) = centers[rng.random_range(0..centers.len())];
                    tp_m(
                        cy + rng.random_range(-220.0..220.0),
                        cx + rng.random_range(-220.0..220.0),
                        t,
                    )
                } else {
                    tp_m(rng.random_range(0.0..2_000.0), rng.random_range(0.0..2_000.0), t)
                }
            })
            .collect()
    }

    #[test]
    fn matches_reference_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for trial in 0..300 {
            let pts = random_instance(&mut rng, 120);
            let params = DbscanParams {
                eps: [120.0, 200.0, 350.0][rng.random_range(0..3)],
                min_pts: rng.random_range(1..5),
            };
            let fast = dbscan(&pts, &params).unwrap();
            let slow = dbscan_reference(&pts, &params).unwrap();
            assert_eq!(fast, slow, "trial {trial}, n = {}, params {params:?}", pts.len());
        }
    }

    #[test]
    fn partition_covers_every_point_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        for _ in 0..50 {
            let pts = random_instance(&mut rng, 150);
            let (clusters, noise) = dbscan(&pts, &DbscanParams::default()).unwrap();
            let mut seen = vec![0u8; pts.len()];
            for c in &clusters {
                for &m in &c.member_indices {
                    seen[m] += 1;
                }
            }
            for &m in &noise {
                seen[m] += 1;
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn stable_under_permutation_with_distinct_timestamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        for _ in 0..30 {
            let mut pts = random_instance(&mut rng, 80);
            for (k, p) in pts.iter_mut().enumerate() {
                p.timestamp = k as i64; // distinct
            }
            let params = DbscanParams::default();
            let (c1, n1) = dbscan(&pts, &params).unwrap();
            let mut shuffled: Vec<TimedPoint> = pts.clone();
            for k in (1..shuffled.len()).rev() {
                shuffled.swap(k, rng.random_range(0..=k));
            }
            let (c2, n2) = dbscan(&shuffled, &params).unwrap();
            // Compare as timestamp sets, which identify points uniquely.
            let key = |c: &Cluster, pts: &[TimedPoint]| {
                let mut ts: Vec<i64> = c.member_indices.iter().map(|&m| pts[m].timestamp).collect();
                ts.sort_unstable();
                ts
            };
            let mut k1: Vec<Vec<i64>> = c1.iter().map(|c| key(c, &pts)).collect();
            let mut k2: Vec<Vec<i64>> = c2.iter().map(|c| key(c, &shuffled)).collect();
            k1.sort();
            k2.sort();
            assert_eq!(k1, k2);
            let mut t1: Vec<i64> = n1.iter().map(|&m| pts[m].timestamp).collect();
            let mut t2: Vec<i64> = n2.iter().map(|&m| shuffled[m].timestamp).collect();
            t1.sort_unstable();
            t2.sort_unstable();
            assert_eq!(t1, t2);
        }
    }

    fn night_ts(day: u32, hh: u32, mm: u32) -> i64 {
        epoch_from_local(
            NaiveDate::from_ymd_opt(2014, 11, day).unwrap(),
            NaiveTime::from_hms_opt(hh, mm, 0).unwrap(),
            DEFAULT_UTC_OFFSET_MINUTES,
        )
    }

    fn fixes_at(north_m: f64, east_m: f64, count: usize, day0: u32, hh: u32) -> Vec<TimedPoint> {
        (0..count)
            .map(|k| {
                let base = tp_m(north_m, east_m, 0);
                TimedPoint {
                    location: base.location,
                    timestamp: night_ts(day0 + (k / 4) as u32, hh, (k % 4) as u32 * 10),
                }
            })
            .collect()
    }

    #[test]
    fn home_is_largest_night_cluster() {
        let mut pts = fixes_at(0.0, 0.0, 30, 1, 23);
        pts.extend(fixes_at(10_000.0, 0.0, 5, 1, 22));
        // Daytime fixes elsewhere must not influence the home result.
        pts.extend(fixes_at(3_000.0, 3_000.0, 20, 1, 14));
        let params = LocusParams::default();
        let homes = infer_home(&pts, &params).unwrap();
        assert_eq!(homes.len(), 1);
        let expect = tp_m(0.0, 0.0, 0).location;
        assert!(haversine_distance(homes[0], expect) < 1.0);
    }

    #[test]
    fn no_window_fixes_means_no_home() {
        let pts = fixes_at(0.0, 0.0, 10, 1, 14);
        let homes = infer_home(&pts, &LocusParams::default()).unwrap();
        assert!(homes.is_empty());
        assert!(infer_user("u", &pts, &LocusParams::default()).unwrap().is_none());
    }

    #[test]
    fn dual_home_requires_ratio_and_distance() {
        // 20 vs 15 fixes, 10 km apart: both kept (15 >= 0.6 * 20).
        let mut pts = fixes_at(0.0, 0.0, 20, 1, 23);
        pts.extend(fixes_at(10_000.0, 0.0, 15, 1, 22));
        let homes = infer_home(&pts, &LocusParams::default()).unwrap();
        assert_eq!(homes.len(), 2);
        assert!(haversine_distance(homes[0], tp_m(0.0, 0.0, 0).location) < 1.0);
        assert!(haversine_distance(homes[1], tp_m(10_000.0, 0.0, 0).location) < 1.0);

        // 20 vs 11 fixes: ratio fails (11 < 12).
        let mut pts = fixes_at(0.0, 0.0, 20, 1, 23);
        pts.extend(fixes_at(10_000.0, 0.0, 11, 1, 22));
        assert_eq!(infer_home(&pts, &LocusParams::default()).unwrap().len(), 1);

        // 20 vs 15 fixes but only 600 m apart: separation fails.
        let mut pts = fixes_at(0.0, 0.0, 20, 1, 23);
        pts.extend(fixes_at(600.0, 0.0, 15, 1, 22));
        assert_eq!(infer_home(&pts, &LocusParams::default()).unwrap().len(), 1);
    }

    #[test]
    fn work_from_daytime_fixes_only() {
        let mut pts = fixes_at(0.0, 0.0, 30, 1, 23);
        pts.extend(fixes_at(5_000.0, 0.0, 12, 1, 10));
        let params = LocusParams::default();
        let work = infer_work(&pts, &params).unwrap().unwrap();
        assert!(haversine_distance(work, tp_m(5_000.0, 0.0, 0).location) < 1.0);
        // All fixes outside 9-18 local: no work.
        let night_only = fixes_at(0.0, 0.0, 10, 1, 23);
        assert!(infer_work(&night_only, &params).unwrap().is_none());
    }

    #[test]
    fn equal_clusters_tie_break_span_then_coords() {
        // Two 6-fix daytime clusters; the second spans more hours.
        let mut pts = Vec::new();
        for k in 0..6 {
            pts.push(TimedPoint {
                location: tp_m(0.0, 0.0, 0).location,
                timestamp: night_ts(1, 10, k * 5),
            });
        }
        for k in 0..6u32 {
            pts.push(TimedPoint {
                location: tp_m(5_000.0, 0.0, 0).location,
                timestamp: night_ts(1, 10 + k, 0),
            });
        }
        let work = infer_work(&pts, &LocusParams::default()).unwrap().unwrap();
        assert!(haversine_distance(work, tp_m(5_000.0, 0.0, 0).location) < 1.0);

        // Identical sizes and spans: smaller (lat, lon) wins.
        let mut pts = Vec::new();
        for k in 0..6 {
            pts.push(TimedPoint {
                location: tp_m(0.0, 0.0, 0).location,
                timestamp: night_ts(1, 10, k * 5),
            });
            pts.push(TimedPoint {
                location: tp_m(5_000.0, 0.0, 0).location,
                timestamp: night_ts(1, 10, k * 5),
            });
        }
        let work = infer_work(&pts, &LocusParams::default()).unwrap().unwrap();
        assert!(haversine_distance(work, tp_m(0.0, 0.0, 0).location) < 1.0);
    }

    #[test]
    fn assignment_table_round_trips_all_shapes() {
        let g = |lat: f64, lon: f64| GeoPoint { lat, lon };
        let assignments = vec![
            HomeWorkAssignment {
                user_id: "u1".into(),
                homes: vec![WeightedHome { location: g(30.123456789, 110.0), weight: 1.0 }],
                work: None,
            },
            HomeWorkAssignment {
                user_id: "u2".into(),
                homes: vec![WeightedHome { location: g(30.0, 110.0), weight: 1.0 }],
                work: Some(g(30.05, 110.05)),
            },
            HomeWorkAssignment {
                user_id: "u3".into(),
                homes: vec![
                    WeightedHome { location: g(30.0, 110.0), weight: 1.0 },
                    WeightedHome { location: g(31.0, 111.0), weight: 1.0 },
                ],
                work: None,
            },
            HomeWorkAssignment {
                user_id: "u4".into(),
                homes: vec![
                    WeightedHome { location: g(30.0, 110.0), weight: 1.0 },
                    WeightedHome { location: g(31.0, 111.0), weight: 1.0 },
                ],
                work: Some(g(30.5, 110.5)),
            },
        ];
        let mut buf = Vec::new();
        write_assignments(&assignments, &mut buf).unwrap();
        let back = read_assignments(buf.as_slice()).unwrap();
        assert_eq!(back, assignments);
    }

    #[test]
    fn assignment_table_rejects_bad_rows() {
        assert!(read_assignments("u1,30.0,110.0\n".as_bytes()).is_err());
        assert!(read_assignments("u1,abc,110.0,1\n".as_bytes()).is_err());
        // Two homes at the same spot violate the separation invariant.
        assert!(read_assignments("u1,30.0,110.0,1,30.0,110.0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn infer_all_identical_across_worker_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut points = Vec::new();
        for u in 0..40 {
            let uid = format!("u{u:03}");
            let (ny, nx) = (rng.random_range(0.0..50_000.0), rng.random_range(0.0..50_000.0));
            for day in 1..6u32 {
                for k in 0..3 {
                    let p = tp_m(ny, nx, 0);
                    points.push(PositioningPoint {
                        user_id: uid.clone(),
                        location: p.location,
                        timestamp: night_ts(day, 22, k * 7),
                    });
                }
            }
        }
        let groups = group_by_user(points);
        let params = LocusParams::default();
        let base = {
            let mut buf = Vec::new();
            write_assignments(&infer_all(&groups, &params, 1).unwrap(), &mut buf).unwrap();
            buf
        };
        for workers in [2, 3, 8] {
            let mut buf = Vec::new();
            write_assignments(&infer_all(&groups, &params, workers).unwrap(), &mut buf).unwrap();
            assert_eq!(buf, base, "workers = {workers}");
        }
        assert_eq!(read_assignments(base.as_slice()).unwrap().len(), 40);
    }

    #[test]
    fn params_validated() {
        assert!(DbscanParams { eps: 0.0, min_pts: 2 }.validate().is_err());
        assert!(DbscanParams { eps: 200.0, min_pts: 0 }.validate().is_err());
        let mut p = LocusParams::default();
        p.dual_home_ratio = 1.5;
        assert!(p.validate().is_err());
    }
}
