//! Population time series, national-share normalization, hourly profiles,
//! and the holiday tourism classifier.
//!
//! All counts are distinct users per day or hour, never raw fix counts:
//! ping frequency varies per user, and distinctness removes that bias.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PositioningPoint, StudyWindow};
use crate::time::{hour_of_week, local_day};

/// A per-day value series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySeries(Vec<(NaiveDate, f64)>);

impl DaySeries {
    pub fn from_pairs(pairs: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for w in pairs.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::validation(format!(
                    "series dates must strictly increase, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((d, v)) = pairs.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::validation(format!("series value {v} on {d} must be >= 0")));
        }
        Ok(DaySeries(pairs))
    }

    pub fn pairs(&self) -> &[(NaiveDate, f64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        self.0
            .binary_search_by_key(&date, |(d, _)| *d)
            .ok()
            .map(|k| self.0[k].1)
    }
}

/// Distinct-user counts for the 168 hour-of-week slots, Monday 00:00
/// local first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourProfile(Vec<f64>);

impl HourProfile {
    pub const SLOTS: usize = 168;

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::SLOTS {
            return Err(Error::validation(format!(
                "hour profile needs {} values, got {}",
                Self::SLOTS,
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::validation("hour profile values must be >= 0"));
        }
        Ok(HourProfile(values))
    }

    pub fn slots(&self) -> &[f64] {
        &self.0
    }
}

/// A holiday comparison pair: a workday shortly before the holiday and a
/// date inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayPair {
    pub before_date: NaiveDate,
    pub during_date: NaiveDate,
}

impl HolidayPair {
    pub fn new(before_date: NaiveDate, during_date: NaiveDate) -> Result<Self> {
        let p = HolidayPair { before_date, during_date };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.before_date >= self.during_date {
            return Err(Error::parameter(format!(
                "holiday pair must have before < during, got {} and {}",
                self.before_date, self.during_date
            )));
        }
        Ok(())
    }
}

/// The three configured holiday pairs: National Day, New Year's Day, and
/// International Workers' Day.
pub fn default_holiday_pairs() -> Vec<HolidayPair> {
    let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
    vec![
        HolidayPair { before_date: d(2014, 9, 29), during_date: d(2014, 10, 2) },
        HolidayPair { before_date: d(2014, 12, 30), during_date: d(2015, 1, 2) },
        HolidayPair { before_date: d(2015, 4, 29), during_date: d(2015, 5, 2) },
    ]
}

/// Distinct members per local day over the whole study window. Days with
/// no member points carry an explicit zero.
pub fn daily_population<F>(
    points: &[PositioningPoint],
    membership: F,
    window: &StudyWindow,
) -> DaySeries
where
    F: Fn(&PositioningPoint) -> bool,
{
    let mut sets: HashMap<NaiveDate, HashSet<&str>> = HashMap::new();
    for p in points {
        if !membership(p) {
            continue;
        }
        let d = local_day(p.timestamp, window.utc_offset_minutes);
        if d < window.start_date || d > window.end_date {
            continue;
        }
        sets.entry(d).or_default().insert(p.user_id.as_str());
    }
    DaySeries(
        window
            .days()
            .map(|d| (d, sets.get(&d).map_or(0.0, |s| s.len() as f64)))
            .collect(),
    )
}

/// Pointwise region / national ratio, removing the user-base growth trend.
pub fn national_share(region: &DaySeries, national: &DaySeries) -> Result<DaySeries> {
    let mut out = Vec::with_capacity(region.len());
    for &(date, value) in region.pairs() {
        let total = national
            .value_on(date)
            .ok_or_else(|| Error::Alignment(format!("national series has no value on {date}")))?;
        if total == 0.0 {
            return Err(Error::validation(format!(
                "national series is zero on {date}, share undefined"
            )));
        }
        out.push((date, value / total));
    }
    Ok(DaySeries(out))
}

/// Min-max scaling to [0, 1]; a constant series maps to all zeros.
pub fn normalize_minmax(s: &DaySeries) -> Result<DaySeries> {
    if s.is_empty() {
        return Err(Error::parameter("cannot normalize an empty series"));
    }
    let min = s.pairs().iter().map(|(_, v)| *v).fold(f64::MAX, f64::min);
    let max = s.pairs().iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
    let span = max - min;
    let scaled = s
        .pairs()
        .iter()
        .map(|&(d, v)| (d, if span == 0.0 { 0.0 } else { (v - min) / span }))
        .collect();
    Ok(DaySeries(scaled))
}

/// Distinct members per hour-of-week slot over the 7 local days starting
/// at `week_start`. Slots are indexed by true hour-of-week (Monday 00:00
/// first), so any 7-day span fills each slot from exactly one date.
pub fn hourly_profile<F>(
    points: &[PositioningPoint],
    membership: F,
    week_start: NaiveDate,
    utc_offset_minutes: i32,
) -> HourProfile
where
    F: Fn(&PositioningPoint) -> bool,
{
    let week_end = week_start + Days::new(7);
    let mut sets: Vec<HashSet<&str>> = vec![HashSet::new(); HourProfile::SLOTS];
    for p in points {
        if !membership(p) {
            continue;
        }
        let d = local_day(p.timestamp, utc_offset_minutes);
        if d < week_start || d >= week_end {
            continue;
        }
        let slot = hour_of_week(p.timestamp, utc_offset_minutes) as usize;
        sets[slot].insert(p.user_id.as_str());
    }
    HourProfile(sets.into_iter().map(|s| s.len() as f64).collect())
}

/// Tourism classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TourismVerdict {
    Tourism,
    NotTourism,
}

impl fmt::Display for TourismVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TourismVerdict::Tourism => "tourism",
            TourismVerdict::NotTourism => "not_tourism",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TourismVerdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tourism" => Ok(TourismVerdict::Tourism),
            "not_tourism" => Ok(TourismVerdict::NotTourism),
            other => Err(Error::validation(format!(
                "unknown tourism verdict {other:?}, expected tourism|not_tourism"
            ))),
        }
    }
}

/// A pair is positive iff the during-value strictly exceeds the
/// before-value; the area is Tourism iff at least `min_positive` pairs
/// are positive.
pub fn classify_tourism(
    series: &DaySeries,
    pairs: &[HolidayPair],
    min_positive: usize,
) -> Result<TourismVerdict> {
    let mut positive = 0;
    for pair in pairs {
        pair.validate()?;
        let value_of = |date: NaiveDate| {
            series
                .value_on(date)
                .ok_or_else(|| Error::Alignment(format!("series has no value on {date}")))
        };
        if value_of(pair.during_date)? > value_of(pair.before_date)? {
            positive += 1;
        }
    }
    Ok(if positive >= min_positive {
        TourismVerdict::Tourism
    } else {
        TourismVerdict::NotTourism
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes `date,value` rows.
pub fn write_series<W: io::Write>(series: &DaySeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (d, v) in series.pairs() {
        w.write_record([d.to_string().as_str(), &fmt_f64(*v)])
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_series`].
pub fn read_series<R: io::Read>(reader: R) -> Result<DaySeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::validation(format!("bad series row: {e}")))?;
        if record.len() != 2 {
            return Err(Error::validation(format!(
                "series row has {} fields, expected 2",
                record.len()
            )));
        }
        let date = record[0]
            .parse::<NaiveDate>()
            .map_err(|_| Error::validation(format!("bad date {:?} in series", &record[0])))?;
        let value = record[1]
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("bad number {:?} in series", &record[1])))?;
        pairs.push((date, value));
    }
    DaySeries::from_pairs(pairs)
}

/// Writes `hour_of_week,value` rows.
pub fn write_profile<W: io::Write>(profile: &HourProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (slot, v) in profile.slots().iter().enumerate() {
        w.write_record([slot.to_string().as_str(), &fmt_f64(*v)])
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_profile`].
pub fn read_profile<R: io::Read>(reader: R) -> Result<HourProfile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut values = vec![0.0; HourProfile::SLOTS];
    let mut seen = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::validation(format!("bad profile row: {e}")))?;
        let slot = record[0]
            .parse::<usize>()
            .map_err(|_| Error::validation(format!("bad slot {:?} in profile", &record[0])))?;
        if slot >= HourProfile::SLOTS {
            return Err(Error::validation(format!("profile slot {slot} out of range")));
        }
        values[slot] = record[1]
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("bad number {:?} in profile", &record[1])))?;
        seen += 1;
    }
    if seen != HourProfile::SLOTS {
        return Err(Error::validation(format!(
            "profile has {seen} rows, expected {}",
            HourProfile::SLOTS
        )));
    }
    HourProfile::from_values(values)
}
