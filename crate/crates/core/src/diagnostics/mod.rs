//! Posterior-predictive checking statistics and envelopes.
//!
//! A dry hour has at most 0.2 mm of rain, so isolated 0.2 mm readings extend
//! dry periods. Seasons are meteorological (December joins the following
//! winter). Envelope quantiles use linear interpolation (type 7).

pub mod effects;
pub mod envelope;
pub mod statistics;

pub use effects::{effect_curves, EffectCurve};
pub use envelope::{
    aggregated_envelope, autocorr_envelope, seasonal_sorted_envelope, seasonal_zero_envelope,
    sorted_value_envelope, top_k_dry_envelope, CheckReport, LAGS, QUANTILE_RULE,
};
pub use statistics::{
    aggregate, average_ranks, dry_period_lengths, seasonal_sorted_values, seasonal_zero_proportion,
    spearman_autocorr, wet_period_lengths, Aggregated, Resolution, DRY_THRESHOLD_TICKS,
};
