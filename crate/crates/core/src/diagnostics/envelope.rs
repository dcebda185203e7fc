//! Posterior-predictive envelopes: observed statistics against the spread of
//! the same statistics over simulated series.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::Season;
use crate::diagnostics::statistics::{
    aggregate, dry_period_lengths, seasonal_sorted_values, seasonal_zero_proportion,
    spearman_autocorr, Aggregated, Resolution,
};
use crate::error::Result;
use crate::model::RainfallSeries;
use crate::stats::quantile;

pub const LOWER: f64 = 0.025;
pub const UPPER: f64 = 0.975;
pub const QUANTILE_RULE: &str =
    "linear interpolation between order statistics (type 7); 2.5%, 50%, 97.5%";

/// Default autocorrelation lags (hours).
pub const LAGS: [usize; 4] = [1, 2, 6, 24];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub statistic: String,
    pub coordinates: Vec<String>,
    /// `None` where the observed statistic is undefined.
    pub observed: Vec<Option<f64>>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
    /// Whether the observed value falls outside `[lower, upper]`.
    pub outside: Vec<Option<bool>>,
    pub n_simulations: usize,
    /// Rank coordinates dropped to align observed and simulated lists.
    pub discarded: usize,
    pub quantile_rule: String,
}

impl CheckReport {
    /// Builds the envelope from `samples[c]`, the simulated values of coordinate `c`.
    /// Undefined (NaN) simulated values are ignored.
    pub fn from_samples(
        statistic: &str,
        coordinates: Vec<String>,
        observed: Vec<Option<f64>>,
        samples: Vec<Vec<f64>>,
        n_simulations: usize,
        discarded: usize,
    ) -> Self {
        let mut lower = Vec::with_capacity(samples.len());
        let mut median = Vec::with_capacity(samples.len());
        let mut upper = Vec::with_capacity(samples.len());
        for mut s in samples {
            s.retain(|v| !v.is_nan());
            s.sort_by(|a, b| a.total_cmp(b));
            lower.push(quantile(&s, LOWER));
            median.push(quantile(&s, 0.5));
            upper.push(quantile(&s, UPPER));
        }
        let outside = observed
            .iter()
            .zip(lower.iter().zip(&upper))
            .map(|(o, (lo, hi))| o.map(|v| v < *lo || v > *hi))
            .collect();
        Self {
            statistic: statistic.to_string(),
            coordinates,
            observed,
            lower,
            median,
            upper,
            outside,
            n_simulations,
            discarded,
            quantile_rule: QUANTILE_RULE.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    /// Fraction of defined coordinates whose observed value lies inside the envelope.
    pub fn fraction_inside(&self) -> f64 {
        let defined: Vec<bool> = self.outside.iter().filter_map(|o| *o).collect();
        defined.iter().filter(|o| !**o).count() as f64 / defined.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "coordinate",
            "observed",
            "lower",
            "median",
            "upper",
            "outside",
        ])?;
        let fmt = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v}")
            }
        };
        for i in 0..self.len() {
            w.write_record([
                self.coordinates[i].clone(),
                self.observed[i].map(fmt).unwrap_or_default(),
                fmt(self.lower[i]),
                fmt(self.median[i]),
                fmt(self.upper[i]),
                self.outside[i].map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Aligns ranked lists on rank, truncating to the shortest; returns the
/// kept length and the number of dropped entries.
fn align(observed: &[f64], simulated: &[Vec<f64>]) -> (usize, usize) {
    let keep = simulated
        .iter()
        .map(Vec::len)
        .chain(std::iter::once(observed.len()))
        .min()
        .unwrap_or(0);
    let dropped = observed.len() - keep + simulated.iter().map(|s| s.len() - keep).sum::<usize>();
    (keep, dropped)
}

fn ranked_report(statistic: &str, observed: Vec<f64>, simulated: Vec<Vec<f64>>) -> CheckReport {
    let (keep, dropped) = align(&observed, &simulated);
    let samples = (0..keep)
        .map(|r| simulated.iter().map(|s| s[r]).collect())
        .collect();
    CheckReport::from_samples(
        statistic,
        (1..=keep).map(|r| format!("rank{r}")).collect(),
        observed[..keep].iter().map(|&v| Some(v)).collect(),
        samples,
        simulated.len(),
        dropped,
    )
}

fn top_k(ticks: &[u32], k: usize) -> Vec<f64> {
    let mut v = dry_period_lengths(ticks);
    v.truncate(k);
    v.into_iter().map(|x| x as f64).collect()
}

/// Envelope of the `k` longest dry periods, rank by rank.
pub fn top_k_dry_envelope(
    observed: &RainfallSeries,
    ensemble: &[RainfallSeries],
    k: usize,
) -> CheckReport {
    let sims: Vec<Vec<f64>> = ensemble.par_iter().map(|s| top_k(s.ticks(), k)).collect();
    ranked_report("dry_period_lengths", top_k(observed.ticks(), k), sims)
}

fn autocorrs(series: &RainfallSeries, lags: &[usize]) -> Result<Vec<Option<f64>>> {
    let x = series.values();
    lags.iter().map(|&l| spearman_autocorr(&x, l)).collect()
}

/// Envelope of Spearman autocorrelations at `lags`.
pub fn autocorr_envelope(
    observed: &RainfallSeries,
    ensemble: &[RainfallSeries],
    lags: &[usize],
) -> Result<CheckReport> {
    let obs = autocorrs(observed, lags)?;
    let sims = ensemble
        .par_iter()
        .map(|s| autocorrs(s, lags))
        .collect::<Result<Vec<_>>>()?;
    let samples = (0..lags.len())
        .map(|i| sims.iter().map(|s| s[i].unwrap_or(f64::NAN)).collect())
        .collect();
    Ok(CheckReport::from_samples(
        "spearman_autocorrelation",
        lags.iter().map(|l| format!("lag{l}")).collect(),
        obs,
        samples,
        ensemble.len(),
        0,
    ))
}

/// Envelope of the per-season zero proportions.
pub fn seasonal_zero_envelope(
    observed: &RainfallSeries,
    ensemble: &[RainfallSeries],
) -> CheckReport {
    let sims: Vec<[Option<f64>; 4]> = ensemble.par_iter().map(seasonal_zero_proportion).collect();
    let samples = (0..4)
        .map(|i| sims.iter().map(|s| s[i].unwrap_or(f64::NAN)).collect())
        .collect();
    CheckReport::from_samples(
        "seasonal_zero_proportion",
        Season::ALL.iter().map(|s| s.label().to_string()).collect(),
        seasonal_zero_proportion(observed).to_vec(),
        samples,
        ensemble.len(),
        0,
    )
}

/// Per-season envelopes of the sorted hourly values, keeping the `max_ranks` largest.
pub fn seasonal_sorted_envelope(
    observed: &RainfallSeries,
    ensemble: &[RainfallSeries],
    max_ranks: usize,
) -> Vec<CheckReport> {
    let truncate = |mut v: [Vec<f64>; 4]| {
        v.iter_mut().for_each(|x| x.truncate(max_ranks));
        v
    };
    let obs = truncate(seasonal_sorted_values(observed));
    let sims: Vec<[Vec<f64>; 4]> = ensemble
        .par_iter()
        .map(|s| truncate(seasonal_sorted_values(s)))
        .collect();
    Season::ALL
        .iter()
        .map(|season| {
            let i = season.index();
            let sim_i: Vec<Vec<f64>> = sims.iter().map(|s| s[i].clone()).collect();
            ranked_report(
                &format!("sorted_values_{}", season.label()),
                obs[i].clone(),
                sim_i,
            )
        })
        .collect()
}

fn sorted_desc(a: &Aggregated) -> Vec<f64> {
    let mut v = a.totals_mm.clone();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Envelope of sorted aggregated totals.
pub fn sorted_value_envelope(observed: &Aggregated, ensemble: &[Aggregated]) -> CheckReport {
    ranked_report(
        &format!("sorted_{}_totals", observed.resolution.label()),
        sorted_desc(observed),
        ensemble.iter().map(sorted_desc).collect(),
    )
}

/// Aggregates observed and simulated series at `resolution` and builds the sorted envelope.
pub fn aggregated_envelope(
    observed: &RainfallSeries,
    ensemble: &[RainfallSeries],
    resolution: Resolution,
) -> CheckReport {
    let sims: Vec<Aggregated> = ensemble
        .par_iter()
        .map(|s| aggregate(s, resolution))
        .collect();
    sorted_value_envelope(&aggregate(observed, resolution), &sims)
}
