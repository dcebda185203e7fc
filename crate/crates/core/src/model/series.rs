use chrono::NaiveDateTime;

use crate::calendar::{HourlyTimeline, TimeCovariates};
use crate::error::{Error, Result};
use crate::model::emission::{mm_of, ticks_of};

/// Hourly rainfall on the 0.2 mm grid, stored as integer grid ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RainfallSeries {
    timeline: HourlyTimeline,
    ticks: Vec<u32>,
}

impl RainfallSeries {
    pub fn from_ticks(timeline: HourlyTimeline, ticks: Vec<u32>) -> Result<Self> {
        if ticks.len() != timeline.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a timeline of {} hours",
                ticks.len(),
                timeline.len()
            )));
        }
        Ok(Self { timeline, ticks })
    }

    /// Builds a series from depths in mm; every value must sit on the grid.
    pub fn from_mm(timeline: HourlyTimeline, values: &[f64]) -> Result<Self> {
        let ticks = values
            .iter()
            .map(|&v| ticks_of(v))
            .collect::<Result<Vec<_>>>()?;
        Self::from_ticks(timeline, ticks)
    }

    pub fn from_timestamps(timestamps: &[NaiveDateTime], values: &[f64]) -> Result<Self> {
        Self::from_mm(HourlyTimeline::from_timestamps(timestamps)?, values)
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn timeline(&self) -> HourlyTimeline {
        self.timeline
    }

    pub fn ticks(&self) -> &[u32] {
        &self.ticks
    }

    pub fn value(&self, t: usize) -> f64 {
        mm_of(self.ticks[t])
    }

    pub fn values(&self) -> Vec<f64> {
        self.ticks.iter().map(|&k| mm_of(k)).collect()
    }

    pub fn covariates(&self) -> TimeCovariates {
        TimeCovariates::from_timeline(self.timeline)
    }

    pub fn total_mm(&self) -> f64 {
        // Sum in ticks so the total is exact.
        self.ticks.iter().map(|&k| k as u64).sum::<u64>() as f64 / 5.0
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.ticks.is_empty() {
            return f64::NAN;
        }
        self.ticks.iter().filter(|&&k| k == 0).count() as f64 / self.ticks.len() as f64
    }
}
