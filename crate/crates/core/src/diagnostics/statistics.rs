//! Summary statistics of a single rainfall series.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::calendar::Season;
use crate::error::{Error, Result};
use crate::model::RainfallSeries;

/// Readings at or below this many grid ticks (0.2 mm) count as dry.
pub const DRY_THRESHOLD_TICKS: u32 = 1;

fn run_lengths(ticks: &[u32], dry: bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0;
    for &k in ticks {
        if (k <= DRY_THRESHOLD_TICKS) == dry {
            run += 1;
        } else if run > 0 {
            out.push(run);
            run = 0;
        }
    }
    if run > 0 {
        out.push(run);
    }
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

/// Lengths (hours) of maximal runs with rainfall <= 0.2 mm, longest first.
pub fn dry_period_lengths(ticks: &[u32]) -> Vec<usize> {
    run_lengths(ticks, true)
}

/// Lengths of maximal runs with rainfall > 0.2 mm, longest first.
pub fn wet_period_lengths(ticks: &[u32]) -> Vec<usize> {
    run_lengths(ticks, false)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation between `x[..T-lag]` and `x[lag..]`.
///
/// Each offset copy is ranked on its own. `Ok(None)` when either copy is
/// constant, since the correlation is then undefined.
pub fn spearman_autocorr(x: &[f64], lag: usize) -> Result<Option<f64>> {
    if lag == 0 || x.len() <= lag + 2 {
        return Err(Error::InvalidArgument(format!(
            "lag {lag} needs a positive lag and more than {} values, got {}",
            lag + 2,
            x.len()
        )));
    }
    let a = average_ranks(&x[..x.len() - lag]);
    let b = average_ranks(&x[lag..]);
    Ok(pearson(&a, &b))
}

/// Fraction of zero readings per meteorological season (DJF, MAM, JJA, SON);
/// `None` for seasons with no hours in the record.
pub fn seasonal_zero_proportion(series: &RainfallSeries) -> [Option<f64>; 4] {
    let mut zeros = [0usize; 4];
    let mut total = [0usize; 4];
    for (ts, &k) in series.timeline().iter().zip(series.ticks()) {
        let s = Season::of(ts).index();
        total[s] += 1;
        zeros[s] += (k == 0) as usize;
    }
    std::array::from_fn(|s| (total[s] > 0).then(|| zeros[s] as f64 / total[s] as f64))
}

/// Values of each season (mm), sorted descending.
pub fn seasonal_sorted_values(series: &RainfallSeries) -> [Vec<f64>; 4] {
    let mut out: [Vec<u32>; 4] = Default::default();
    for (ts, &k) in series.timeline().iter().zip(series.ticks()) {
        out[Season::of(ts).index()].push(k);
    }
    out.map(|mut v| {
        v.sort_unstable_by(|a, b| b.cmp(a));
        v.into_iter().map(crate::model::emission::mm_of).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Daily,
    Monthly,
}

impl Resolution {
    pub fn label(self) -> &'static str {
        match self {
            Resolution::Daily => "daily",
            Resolution::Monthly => "monthly",
        }
    }

    fn period_of(self, date: NaiveDate) -> NaiveDate {
        match self {
            Resolution::Daily => date,
            Resolution::Monthly => date.with_day(1).expect("day 1 exists"),
        }
    }
}

/// Totals per calendar day or month; partial first/last periods are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregated {
    pub resolution: Resolution,
    /// First day of each period.
    pub periods: Vec<NaiveDate>,
    pub totals_mm: Vec<f64>,
}

pub fn aggregate(series: &RainfallSeries, resolution: Resolution) -> Aggregated {
    let mut periods = Vec::new();
    let mut ticks: Vec<u64> = Vec::new();
    for (ts, &k) in series.timeline().iter().zip(series.ticks()) {
        let p = resolution.period_of(ts.date());
        if periods.last() != Some(&p) {
            periods.push(p);
            ticks.push(0);
        }
        *ticks.last_mut().unwrap() += k as u64;
    }
    Aggregated {
        resolution,
        periods,
        totals_mm: ticks.into_iter().map(|t| t as f64 / 5.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::HourlyTimeline;
    use chrono::NaiveDateTime;

    fn start(y: i32, m: u32, d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    fn series(begin: NaiveDateTime, mm: &[f64]) -> RainfallSeries {
        RainfallSeries::from_mm(HourlyTimeline::new(begin, mm.len()), mm).unwrap()
    }

    fn ticks(mm: &[f64]) -> Vec<u32> {
        mm.iter().map(|v| (v * 5.0).round() as u32).collect()
    }

    #[test]
    fn dry_runs() {
        assert_eq!(dry_period_lengths(&[0; 10]), vec![10]);
        assert_eq!(
            dry_period_lengths(&ticks(&[0.0, 0.2, 0.4, 0.0, 0.0, 0.6, 0.0])),
            vec![2, 2, 1]
        );
        assert!(dry_period_lengths(&[2; 6]).is_empty());
        assert_eq!(
            wet_period_lengths(&ticks(&[0.0, 0.2, 0.4, 0.0, 0.0, 0.6, 0.0])),
            vec![1, 1]
        );
    }

    #[test]
    fn spearman_hand_cases() {
        let inc: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!((spearman_autocorr(&inc, 1).unwrap().unwrap() - 1.0).abs() < 1e-14);
        let alt = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!((spearman_autocorr(&alt, 1).unwrap().unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(spearman_autocorr(&[3.0; 10], 2).unwrap(), None);
        assert!(spearman_autocorr(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
    }

    #[test]
    fn seasonal_proportions() {
        let s = series(start(2001, 1, 1), &vec![0.0; 24 * 365]);
        assert_eq!(seasonal_zero_proportion(&s), [Some(1.0); 4]);
        let tl = HourlyTimeline::new(start(2001, 1, 1), 24 * 365);
        let mm: Vec<f64> = tl
            .iter()
            .map(|ts| {
                if Season::of(ts) == Season::Jja {
                    0.0
                } else {
                    0.4
                }
            })
            .collect();
        let s = RainfallSeries::from_mm(tl, &mm).unwrap();
        assert_eq!(
            seasonal_zero_proportion(&s),
            [Some(0.0), Some(0.0), Some(1.0), Some(0.0)]
        );
        // Only January hours: the other seasons are undefined.
        let s = series(start(2001, 1, 1), &[0.0, 0.2, 0.0, 0.4]);
        assert_eq!(seasonal_zero_proportion(&s), [Some(0.5), None, None, None]);
    }

    #[test]
    fn december_is_winter() {
        let s = series(start(2001, 12, 31), &[0.0, 0.4]);
        assert_eq!(seasonal_zero_proportion(&s)[0], Some(0.5));
        let sorted = seasonal_sorted_values(&s);
        assert_eq!(sorted[0], vec![0.4, 0.0]);
    }

    #[test]
    fn aggregation() {
        let s = series(start(2003, 5, 7), &[0.2; 24]);
        let daily = aggregate(&s, Resolution::Daily);
        assert_eq!(daily.totals_mm, vec![4.8]);
        let s = series(start(2004, 2, 28), &vec![0.0; 24 * 3]);
        let daily = aggregate(&s, Resolution::Daily);
        assert_eq!(daily.totals_mm, vec![0.0; 3]);
        assert_eq!(
            daily.periods[1],
            NaiveDate::from_ymd_opt(2004, 2, 29).unwrap()
        );
        // 2004 is a leap year: Feb 28 00:00 + 48 h is Mar 1.
        let monthly = aggregate(&s, Resolution::Monthly);
        assert_eq!(monthly.periods.len(), 2);
        assert_eq!(
            monthly.periods[1],
            NaiveDate::from_ymd_opt(2004, 3, 1).unwrap()
        );
    }
}
