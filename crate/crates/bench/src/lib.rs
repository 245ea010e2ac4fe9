//! Synthetic inputs for the benchmark targets. Everything is seeded so
//! repeated runs measure the same workload.

use chrono::{Days, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ghostgrid_core::geo::GeoPoint;
use ghostgrid_core::ingest::{self, PositioningPoint, StudyWindow};
use ghostgrid_core::locus::{HomeWorkAssignment, TimedPoint, WeightedHome};
use ghostgrid_core::time::epoch_from_local;

pub fn study_window() -> StudyWindow {
    StudyWindow::new(
        chrono::NaiveDate::from_ymd_opt(2014, 9, 25).unwrap(),
        chrono::NaiveDate::from_ymd_opt(2014, 10, 8).unwrap(),
        480,
    )
    .unwrap()
}

/// Points around a handful of dense seeds plus scattered noise, the shape
/// the anchor clustering sees for one user.
pub fn clustered_points(n: usize, seed: u64) -> Vec<TimedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<(f64, f64)> = (0..4)
        .map(|_| (30.0 + rng.random::<f64>() * 0.02, 114.0 + rng.random::<f64>() * 0.02))
        .collect();
    (0..n)
        .map(|_| {
            let (lat, lon) = if rng.random::<f64>() < 0.8 {
                let (slat, slon) = seeds[rng.random_range(0..seeds.len())];
                (
                    slat + (rng.random::<f64>() - 0.5) * 0.004,
                    slon + (rng.random::<f64>() - 0.5) * 0.004,
                )
            } else {
                (30.0 + rng.random::<f64>() * 0.05, 114.0 + rng.random::<f64>() * 0.05)
            };
            TimedPoint { location: GeoPoint { lat, lon }, timestamp: rng.random_range(0..50_000) }
        })
        .collect()
}

/// One resolved home (and usually a work place) per user, spread over a
/// roughly 200 by 300 km box.
pub fn synthetic_assignments(users: usize, seed: u64) -> Vec<HomeWorkAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..users)
        .map(|u| {
            let home = GeoPoint {
                lat: 29.5 + rng.random::<f64>() * 2.0,
                lon: 113.0 + rng.random::<f64>() * 3.0,
            };
            let work = (rng.random::<f64>() < 0.7)
                .then(|| GeoPoint { lat: home.lat + 0.03, lon: home.lon });
            HomeWorkAssignment {
                user_id: format!("u{u:06}"),
                homes: vec![WeightedHome { location: home, weight: 1.0 }],
                work,
            }
        })
        .collect()
}

/// A serialized positioning log: `users` tracks of `per_user` fixes each,
/// night fixes at home and office-hour fixes one grid step away.
pub fn points_csv(users: usize, per_user: usize, seed: u64) -> Vec<u8> {
    let window = study_window();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let night = [21u32, 22, 23, 0, 1, 2, 3, 4, 5];
    let mut points = Vec::with_capacity(users * per_user);
    for u in 0..users {
        let uid = format!("u{u:06}");
        let hlat = 29.5 + rng.random::<f64>() * 2.0;
        let hlon = 113.0 + rng.random::<f64>() * 3.0;
        for k in 0..per_user {
            let (lat0, lon0, hour) = if k % 5 < 3 {
                (hlat, hlon, night[rng.random_range(0..night.len())])
            } else {
                (hlat + 0.03, hlon, rng.random_range(9..18))
            };
            let day = window.start_date + Days::new(rng.random_range(0..14));
            points.push(PositioningPoint {
                user_id: uid.clone(),
                location: GeoPoint {
                    lat: lat0 + (rng.random::<f64>() - 0.5) * 0.0004,
                    lon: lon0 + (rng.random::<f64>() - 0.5) * 0.0004,
                },
                timestamp: epoch_from_local(
                    day,
                    NaiveTime::from_hms_opt(hour, rng.random_range(0..60), rng.random_range(0..60))
                        .unwrap(),
                    window.utc_offset_minutes,
                ),
            });
        }
    }
    let mut csv = Vec::with_capacity(points.len() * 48);
    ingest::write_points(&points, &mut csv).unwrap();
    csv
}
