//! Local-time helpers.
//!
//! Timestamps are stored as epoch seconds UTC everywhere; a single
//! configured UTC offset (default +08:00, China civil time) converts them
//! to local calendar days and hours. No timezone database is involved.

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default UTC offset in minutes (+08:00).
pub const DEFAULT_UTC_OFFSET_MINUTES: i32 = 480;

fn local_datetime(epoch_s: i64, utc_offset_minutes: i32) -> NaiveDateTime {
    let shifted = epoch_s + i64::from(utc_offset_minutes) * 60;
    DateTime::from_timestamp(shifted, 0)
        .expect("epoch seconds out of chrono range")
        .naive_utc()
}

/// Local calendar date of an epoch timestamp.
pub fn local_day(epoch_s: i64, utc_offset_minutes: i32) -> NaiveDate {
    local_datetime(epoch_s, utc_offset_minutes).date()
}

/// Local hour of day (0..=23) of an epoch timestamp.
pub fn local_hour(epoch_s: i64, utc_offset_minutes: i32) -> u32 {
    local_datetime(epoch_s, utc_offset_minutes).time().hour()
}

/// Hour-of-week slot (0..=167), Monday 00:00 local first.
pub fn hour_of_week(epoch_s: i64, utc_offset_minutes: i32) -> u32 {
    let dt = local_datetime(epoch_s, utc_offset_minutes);
    dt.date().weekday().num_days_from_monday() * 24 + dt.time().hour()
}

/// Epoch seconds UTC of a local date + time under the given offset.
pub fn epoch_from_local(date: NaiveDate, time: NaiveTime, utc_offset_minutes: i32) -> i64 {
    date.and_time(time).and_utc().timestamp() - i64::from(utc_offset_minutes) * 60
}

/// A half-open local hour-of-day window `[start, end)` with wrap-around.
///
/// `end` may be 24 (end of day). A window with `start == end` covers the
/// full day. A window whose start exceeds its end wraps past midnight,
/// e.g. 21 -> 6 keeps hours 21..=23 and 0..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourWindow {
    pub start: u32,
    pub end: u32,
}

impl HourWindow {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        let w = HourWindow { start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start > 23 {
            return Err(Error::parameter(format!(
                "hour window start {} not in 0..=23",
                self.start
            )));
        }
        if self.end > 24 {
            return Err(Error::parameter(format!(
                "hour window end {} not in 0..=24",
                self.end
            )));
        }
        Ok(())
    }

    pub fn contains(&self, hour: u32) -> bool {
        if self.start == self.end {
            return true;
        }
        if self.start < self.end {
            hour >= self.start && hour < self.end
        } else {
            hour >= self.start || hour < self.end
        }
    }

    /// The hours of day covered, in window order (start first).
    pub fn hours(&self) -> Vec<u32> {
        (0..24)
            .map(|k| (self.start + k) % 24)
            .filter(|h| self.contains(*h))
            .collect()
    }
}
