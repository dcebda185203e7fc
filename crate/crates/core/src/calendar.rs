//! Hourly calendar handling and the time covariates fed to every spline.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A gap-free run of hourly timestamps, stored as its first hour and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourlyTimeline {
    start: NaiveDateTime,
    len: usize,
}

impl HourlyTimeline {
    pub fn new(start: NaiveDateTime, len: usize) -> Self {
        Self { start, len }
    }

    /// Validates that `timestamps` are strictly increasing and exactly one hour apart.
    pub fn from_timestamps(timestamps: &[NaiveDateTime]) -> Result<Self> {
        let Some(&start) = timestamps.first() else {
            return Err(Error::Timestamps {
                index: 0,
                reason: "empty timestamp sequence".into(),
            });
        };
        for (i, pair) in timestamps.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if step == Duration::hours(1) {
                continue;
            }
            let reason = if step.is_zero() {
                format!("duplicate timestamp {}", pair[1])
            } else if step < Duration::zero() {
                format!("timestamp {} precedes {}", pair[1], pair[0])
            } else {
                format!("gap of {} minutes before {}", step.num_minutes(), pair[1])
            };
            return Err(Error::Timestamps {
                index: i + 1,
                reason,
            });
        }
        Ok(Self::new(start, timestamps.len()))
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        (0..self.len).map(move |i| self.timestamp(i))
    }

    /// Number of distinct calendar years touched by the record.
    pub fn record_years(&self) -> usize {
        if self.len == 0 {
            return 0;
        }
        let first = self.start.year();
        let last = self.timestamp(self.len - 1).year();
        (last - first + 1) as usize
    }
}

/// Per-hour covariates: position within the calendar year and within the record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCovariates {
    pub timeline: HourlyTimeline,
    /// Fraction of the way through the calendar year, in [0, 1).
    pub year_position: Vec<f64>,
    /// Fraction of the way through the full record, in [0, 1].
    pub overall_position: Vec<f64>,
}

impl TimeCovariates {
    pub fn from_timeline(timeline: HourlyTimeline) -> Self {
        let n = timeline.len();
        let year_position = timeline.iter().map(year_fraction).collect();
        let overall_position = (0..n)
            .map(|i| {
                if n > 1 {
                    i as f64 / (n - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            timeline,
            year_position,
            overall_position,
        }
    }

    pub fn hours(&self) -> usize {
        self.timeline.len()
    }
}

/// Builds covariates from explicit timestamps, rejecting gaps and duplicates.
pub fn build_time_covariates(timestamps: &[NaiveDateTime]) -> Result<TimeCovariates> {
    HourlyTimeline::from_timestamps(timestamps).map(TimeCovariates::from_timeline)
}

fn hours_in_year(year: i32) -> f64 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366.0 * 24.0
    } else {
        365.0 * 24.0
    }
}

/// Hour-of-year divided by the number of hours in that specific year.
pub fn year_fraction(ts: NaiveDateTime) -> f64 {
    let hour_of_year = ts.ordinal0() as f64 * 24.0
        + ts.hour() as f64
        + (ts.minute() as f64 * 60.0 + ts.second() as f64) / 3600.0;
    hour_of_year / hours_in_year(ts.year())
}

/// Meteorological seasons; December belongs to the following winter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Djf, Season::Mam, Season::Jja, Season::Son];

    pub fn of(ts: NaiveDateTime) -> Self {
        match ts.month() {
            12 | 1 | 2 => Season::Djf,
            3..=5 => Season::Mam,
            6..=8 => Season::Jja,
            _ => Season::Son,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, 0, 0)
            .unwrap()
    }

    #[test]
    fn new_year_is_cycle_origin() {
        assert_eq!(year_fraction(ts(2013, 1, 1, 0)), 0.0);
        assert_eq!(year_fraction(ts(2016, 1, 1, 0)), 0.0);
    }

    #[test]
    fn midyear_non_leap() {
        // Jul 2 12:00 is hour 4380 of 8760.
        assert_eq!(year_fraction(ts(2017, 7, 2, 12)), 0.5);
    }

    #[test]
    fn leap_year_uses_its_own_length() {
        // 2016 has 8784 hours; Jul 2 12:00 is hour 4404.
        assert!((year_fraction(ts(2016, 7, 2, 12)) - 4404.0 / 8784.0).abs() < 1e-15);
        let last = year_fraction(ts(2016, 12, 31, 23));
        assert!((last - 8783.0 / 8784.0).abs() < 1e-15);
    }

    #[test]
    fn overall_position_endpoints() {
        let tl = HourlyTimeline::new(ts(2010, 3, 4, 5), 100);
        let cov = TimeCovariates::from_timeline(tl);
        assert_eq!(cov.overall_position[0], 0.0);
        assert_eq!(cov.overall_position[99], 1.0);
        assert!(cov.overall_position.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_duplicate_and_gap() {
        let mut stamps: Vec<_> = (0..5).map(|h| ts(2010, 1, 1, h)).collect();
        stamps[3] = stamps[2];
        match build_time_covariates(&stamps) {
            Err(Error::Timestamps { index, reason }) => {
                assert_eq!(index, 3);
                assert!(reason.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let gap = vec![ts(2010, 1, 1, 0), ts(2010, 1, 1, 1), ts(2010, 1, 1, 3)];
        match build_time_covariates(&gap) {
            Err(Error::Timestamps { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eight_year_record() {
        let tl = HourlyTimeline::new(ts(2010, 1, 1, 0), 70128);
        assert_eq!(tl.record_years(), 8);
        assert_eq!(tl.timestamp(70127), ts(2017, 12, 31, 23));
    }

    #[test]
    fn seasons() {
        assert_eq!(Season::of(ts(2010, 12, 1, 0)), Season::Djf);
        assert_eq!(Season::of(ts(2010, 2, 28, 0)), Season::Djf);
        assert_eq!(Season::of(ts(2010, 6, 1, 0)), Season::Jja);
        assert_eq!(Season::of(ts(2010, 11, 30, 23)), Season::Son);
    }
}
