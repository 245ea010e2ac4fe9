//! Parsing and validation of positioning logs and POI catalogs, plus
//! local-hour windowing.
//!
//! The default malformed-row policy is skip-and-report: large logs always
//! contain noise, so bad rows are counted per error class instead of
//! aborting. Strict mode turns the first malformed row into a parse error
//! with its line number, which fixture tests rely on.

use std::io;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::time::{local_day, HourWindow};

/// One anonymized positioning fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningPoint {
    pub user_id: String,
    pub location: GeoPoint,
    /// Epoch seconds UTC.
    pub timestamp: i64,
}

/// Point-of-interest category. Unknown input text maps to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiCategory {
    Residential,
    Villa,
    Other,
}

impl PoiCategory {
    pub fn parse(s: &str) -> PoiCategory {
        match s {
            "residential" => PoiCategory::Residential,
            "villa" => PoiCategory::Villa,
            _ => PoiCategory::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PoiCategory::Residential => "residential",
            PoiCategory::Villa => "villa",
            PoiCategory::Other => "other",
        }
    }
}

/// A named point of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub name: String,
    pub location: GeoPoint,
    pub category: PoiCategory,
}

/// The inclusive date range under analysis plus the single UTC offset used
/// to localize timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub utc_offset_minutes: i32,
}

impl StudyWindow {
    pub fn new(start_date: NaiveDate, end_date: NaiveDate, utc_offset_minutes: i32) -> Result<Self> {
        if start_date > end_date {
            return Err(Error::parameter(format!(
                "study window start {start_date} is after end {end_date}"
            )));
        }
        Ok(StudyWindow { start_date, end_date, utc_offset_minutes })
    }

    /// True if the timestamp's local calendar day falls inside the window.
    pub fn contains(&self, timestamp: i64) -> bool {
        let d = local_day(timestamp, self.utc_offset_minutes);
        self.start_date <= d && d <= self.end_date
    }

    /// Every local date in the window, in order.
    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start_date.iter_days().take_while(|d| *d <= self.end_date)
    }
}

/// Wire format of a positioning log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFormat {
    /// Comma-delimited `user_id,lat,lon,timestamp`, optional header.
    Csv,
    /// One JSON object per line with the same four fields.
    JsonLines,
}

/// Per-class counts of rejected rows. Counters are additive, so reports
/// from sharded parses merge by summation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    /// Row structure unreadable (CSV framing or JSON syntax).
    pub bad_record: u64,
    /// Wrong number of fields.
    pub bad_field_count: u64,
    /// A numeric field failed to parse.
    pub bad_number: u64,
    /// Coordinates outside valid WGS84 ranges or non-finite.
    pub out_of_range: u64,
    /// Timestamp outside the configured study window.
    pub out_of_window: u64,
}

impl RejectionReport {
    pub fn total(&self) -> u64 {
        self.bad_record + self.bad_field_count + self.bad_number + self.out_of_range + self.out_of_window
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn merge(&mut self, other: &RejectionReport) {
        self.bad_record += other.bad_record;
        self.bad_field_count += other.bad_field_count;
        self.bad_number += other.bad_number;
        self.out_of_range += other.out_of_range;
        self.out_of_window += other.out_of_window;
    }
}

enum RowOutcome<T> {
    Ok(T),
    Header,
    Reject(&'static str),
}

fn classify_reject(report: &mut RejectionReport, class: &'static str) {
    match class {
        "bad_record" => report.bad_record += 1,
        "bad_field_count" => report.bad_field_count += 1,
        "bad_number" => report.bad_number += 1,
        "out_of_range" => report.out_of_range += 1,
        "out_of_window" => report.out_of_window += 1,
        _ => unreachable!("unknown rejection class"),
    }
}

fn point_from_fields(
    user_id: &str,
    lat: &str,
    lon: &str,
    ts: &str,
    window: Option<&StudyWindow>,
) -> RowOutcome<PositioningPoint> {
    let Ok(lat) = lat.trim().parse::<f64>() else {
        return RowOutcome::Reject("bad_number");
    };
    let Ok(lon) = lon.trim().parse::<f64>() else {
        return RowOutcome::Reject("bad_number");
    };
    let Ok(timestamp) = ts.trim().parse::<i64>() else {
        return RowOutcome::Reject("bad_number");
    };
    let Ok(location) = GeoPoint::new(lat, lon) else {
        return RowOutcome::Reject("out_of_range");
    };
    if let Some(w) = window {
        if !w.contains(timestamp) {
            return RowOutcome::Reject("out_of_window");
        }
    }
    RowOutcome::Ok(PositioningPoint { user_id: user_id.to_string(), location, timestamp })
}

#[derive(Deserialize)]
struct JsonPointRow {
    user_id: String,
    lat: f64,
    lon: f64,
    timestamp: i64,
}

/// Parses a positioning log. Valid rows come back in input order; malformed
/// rows are counted per class unless `strict`, in which case the first one
/// aborts with its line number.
pub fn parse_points<R: io::Read>(
    reader: R,
    format: PointFormat,
    window: Option<&StudyWindow>,
    strict: bool,
) -> Result<(Vec<PositioningPoint>, RejectionReport)> {
    match format {
        PointFormat::Csv => parse_points_csv(reader, window, strict),
        PointFormat::JsonLines => parse_points_jsonl(reader, window, strict),
    }
}

fn parse_points_csv<R: io::Read>(
    reader: R,
    window: Option<&StudyWindow>,
    strict: bool,
) -> Result<(Vec<PositioningPoint>, RejectionReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut report = RejectionReport::default();
    let mut record = csv::ByteRecord::new();
    let mut first = true;
    loop {
        let line = rdr.position().line();
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                if e.is_io_error() {
                    return Err(Error::Io(io::Error::other(e)));
                }
                if strict {
                    return Err(Error::Parse { line, message: e.to_string() });
                }
                report.bad_record += 1;
                continue;
            }
        }
        let outcome = if record.len() != 4 {
            RowOutcome::Reject("bad_field_count")
        } else {
            match record.iter().map(std::str::from_utf8).collect::<std::result::Result<Vec<&str>, _>>() {
                Err(_) => RowOutcome::Reject("bad_record"),
                Ok(fields) => point_from_fields(fields[0], fields[1], fields[2], fields[3], window),
            }
        };
        // A non-numeric first row is a header, not an error.
        let outcome = match outcome {
            RowOutcome::Reject("bad_number") | RowOutcome::Reject("bad_field_count") if first => {
                RowOutcome::Header
            }
            o => o,
        };
        handle_outcome(outcome, strict, line, &mut points, &mut report)?;
        first = false;
    }
    Ok((points, report))
}

fn parse_points_jsonl<R: io::Read>(
    reader: R,
    window: Option<&StudyWindow>,
    strict: bool,
) -> Result<(Vec<PositioningPoint>, RejectionReport)> {
    let mut points = Vec::new();
    let mut report = RejectionReport::default();
    let buf = io::BufReader::new(reader);
    for (idx, line) in io::BufRead::lines(buf).enumerate() {
        let line_no = idx as u64 + 1;
        let text = line.map_err(Error::Io)?;
        if text.trim().is_empty() {
            continue;
        }
        let outcome = match serde_json::from_str::<JsonPointRow>(&text) {
            Err(_) => RowOutcome::Reject("bad_record"),
            Ok(row) => match GeoPoint::new(row.lat, row.lon) {
                Err(_) => RowOutcome::Reject("out_of_range"),
                Ok(location) => {
                    if window.is_some_and(|w| !w.contains(row.timestamp)) {
                        RowOutcome::Reject("out_of_window")
                    } else {
                        RowOutcome::Ok(PositioningPoint {
                            user_id: row.user_id,
                            location,
                            timestamp: row.timestamp,
                        })
                    }
                }
            },
        };
        handle_outcome(outcome, strict, line_no, &mut points, &mut report)?;
    }
    Ok((points, report))
}

fn handle_outcome<T>(
    outcome: RowOutcome<T>,
    strict: bool,
    line: u64,
    accepted: &mut Vec<T>,
    report: &mut RejectionReport,
) -> Result<()> {
    match outcome {
        RowOutcome::Ok(v) => accepted.push(v),
        RowOutcome::Header => {}
        RowOutcome::Reject(class) => {
            if strict {
                return Err(Error::Parse {
                    line,
                    message: format!("rejected row ({class})"),
                });
            }
            classify_reject(report, class);
        }
    }
    Ok(())
}

/// Parses a POI catalog (`name,lat,lon,category`). Unknown category text
/// maps to `other`; duplicate rows are retained.
pub fn parse_pois<R: io::Read>(reader: R, strict: bool) -> Result<(Vec<Poi>, RejectionReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut pois = Vec::new();
    let mut report = RejectionReport::default();
    let mut record = csv::ByteRecord::new();
    let mut first = true;
    loop {
        let line = rdr.position().line();
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                if e.is_io_error() {
                    return Err(Error::Io(io::Error::other(e)));
                }
                if strict {
                    return Err(Error::Parse { line, message: e.to_string() });
                }
                report.bad_record += 1;
                continue;
            }
        }
        let outcome = if record.len() != 4 {
            RowOutcome::Reject("bad_field_count")
        } else {
            match record.iter().map(std::str::from_utf8).collect::<std::result::Result<Vec<&str>, _>>() {
                Err(_) => RowOutcome::Reject("bad_record"),
                Ok(fields) => {
                    let lat = fields[1].trim().parse::<f64>();
                    let lon = fields[2].trim().parse::<f64>();
                    match (lat, lon) {
                        (Ok(lat), Ok(lon)) => match GeoPoint::new(lat, lon) {
                            Ok(location) => RowOutcome::Ok(Poi {
                                name: fields[0].to_string(),
                                location,
                                category: PoiCategory::parse(fields[3].trim()),
                            }),
                            Err(_) => RowOutcome::Reject("out_of_range"),
                        },
                        _ => RowOutcome::Reject("bad_number"),
                    }
                }
            }
        };
        let outcome = match outcome {
            RowOutcome::Reject("bad_number") | RowOutcome::Reject("bad_field_count") if first => {
                RowOutcome::Header
            }
            o => o,
        };
        handle_outcome(outcome, strict, line, &mut pois, &mut report)?;
        first = false;
    }
    Ok((pois, report))
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes a positioning log as headered `user_id,lat,lon,timestamp` rows
/// that [`parse_points`] reads back losslessly.
pub fn write_points<W: io::Write>(points: &[PositioningPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "lat", "lon", "timestamp"])
        .map_err(|e| Error::Internal(e.to_string()))?;
    for p in points {
        w.write_record([
            p.user_id.as_str(),
            &fmt_f64(p.location.lat),
            &fmt_f64(p.location.lon),
            &p.timestamp.to_string(),
        ])
        .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a POI catalog as headered `name,lat,lon,category` rows that
/// [`parse_pois`] reads back losslessly.
pub fn write_pois<W: io::Write>(pois: &[Poi], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "lat", "lon", "category"])
        .map_err(|e| Error::Internal(e.to_string()))?;
    for p in pois {
        w.write_record([
            p.name.as_str(),
            &fmt_f64(p.location.lat),
            &fmt_f64(p.location.lon),
            p.category.as_str(),
        ])
        .map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps points whose local hour-of-day falls in `[hh_start, hh_end)` with
/// wrap-around. `hh_end` may be 24; a window of 0 to 24 is the identity.
pub fn filter_local_hours(
    points: Vec<PositioningPoint>,
    hh_start: u32,
    hh_end: u32,
    utc_offset_minutes: i32,
) -> Result<Vec<PositioningPoint>> {
    let window = HourWindow::new(hh_start, hh_end)?;
    Ok(points
        .into_iter()
        .filter(|p| window.contains(crate::time::local_hour(p.timestamp, utc_offset_minutes)))
        .collect())
}
