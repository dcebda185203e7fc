//! Observation model: point mass at zero mixed with an interval-censored,
//! zero-truncated GPD on the 0.2 mm reporting grid.
//!
//! A reading of `k` ticks (`x = 0.2 k` mm, `k >= 1`) has probability
//! `(1 - pi) [F(x + 0.1) - F(x - 0.1)] / [1 - F(0.1)]`; the censoring intervals
//! are `(x - 0.1, x + 0.1]`.

use crate::error::{Error, Result};
use crate::model::gpd::{inverse_log_survival, log_survival};
use crate::model::params::StateEmission;
use crate::model::structure::ModelDesign;
use crate::model::transition::logistic;

/// Reporting resolution of the gauge.
pub const GRID_MM: f64 = 0.2;
/// Values below this are reported as zero.
pub const TRUNCATION_MM: f64 = 0.1;

/// Largest tick index the sampler will return; caps pathological heavy tails.
const MAX_TICKS: f64 = 1e9;

/// Converts a depth in mm to grid ticks, rejecting negative or off-grid values.
pub fn ticks_of(x: f64) -> Result<u32> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rainfall must be a nonnegative number, got {x}"
        )));
    }
    let k = (x / GRID_MM).round();
    if (x - k * GRID_MM).abs() > 1e-9 || k > u32::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "{x} mm is not on the {GRID_MM} mm grid"
        )));
    }
    Ok(k as u32)
}

/// Depth in mm of `ticks` grid steps (closest double to the decimal value).
#[inline]
pub fn mm_of(ticks: u32) -> f64 {
    ticks as f64 / 5.0
}

/// Censoring interval edges `((2k - 1) / 10, (2k + 1) / 10)` of tick `k`.
#[inline]
fn bin_edges(ticks: u32) -> (f64, f64) {
    let k = ticks as f64;
    ((2.0 * k - 1.0) / 10.0, (2.0 * k + 1.0) / 10.0)
}

/// Conditional mass of tick `k >= 1` given a positive reading.
#[inline]
pub fn positive_bin_mass(ticks: u32, sigma: f64, xi: f64) -> f64 {
    let base = log_survival(TRUNCATION_MM, sigma, xi);
    if base == f64::NEG_INFINITY {
        return 0.0;
    }
    let (a, b) = bin_edges(ticks);
    let lo = log_survival(a, sigma, xi) - base;
    if lo == f64::NEG_INFINITY {
        return 0.0;
    }
    let hi = log_survival(b, sigma, xi) - base;
    // S(a)/S0 - S(b)/S0 without cancellation
    -lo.exp() * (hi - lo).exp_m1()
}

/// Mass above tick `k` given a positive reading: `S(x + 0.1) / S(0.1)`.
pub fn positive_tail_mass(ticks: u32, sigma: f64, xi: f64) -> f64 {
    let base = log_survival(TRUNCATION_MM, sigma, xi);
    if base == f64::NEG_INFINITY {
        return 0.0;
    }
    (log_survival(bin_edges(ticks).1, sigma, xi) - base).exp()
}

/// Emission probability of a reading of `ticks` steps.
#[inline]
pub fn emission_prob_ticks(ticks: u32, pi: f64, sigma: f64, xi: f64) -> f64 {
    if ticks == 0 {
        pi
    } else {
        (1.0 - pi) * positive_bin_mass(ticks, sigma, xi)
    }
}

/// Emission probability of an observed depth `x` mm.
pub fn emission_prob(x: f64, pi: f64, sigma: f64, xi: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "GPD scale must be positive, got {sigma}"
        )));
    }
    Ok(emission_prob_ticks(ticks_of(x)?, pi, sigma, xi))
}

/// Zero probability, GPD scale and shape of one emitting group at one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionRates {
    pub pi: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl EmissionRates {
    pub fn at(state: &StateEmission, design: &ModelDesign, t: usize) -> Self {
        let link = |reg: &crate::model::params::Regression,
                    d: &crate::model::structure::SmoothDesign| {
            reg.intercept + d.effect_at(t, &reg.seasonal, &reg.overall)
        };
        Self {
            pi: logistic(link(&state.zero_prob, &design.zero_prob)),
            sigma: link(&state.log_scale, &design.log_scale).exp(),
            xi: link(&state.shape, &design.shape),
        }
    }

    pub fn prob(&self, ticks: u32) -> f64 {
        emission_prob_ticks(ticks, self.pi, self.sigma, self.xi)
    }
}

/// Emission probability of observation `x` in latent state `z` at hour `t`.
pub fn emission_prob_at(
    x: f64,
    z: usize,
    t: usize,
    emission: &crate::model::params::EmissionModel,
    design: &ModelDesign,
) -> Result<f64> {
    let ticks = ticks_of(x)?;
    let group = design.structure.space.group(z);
    Ok(EmissionRates::at(&emission.groups[group], design, t).prob(ticks))
}

/// Draws a positive reading (in ticks) by inverting the grid-mass CDF.
///
/// `u` is uniform on (0, 1). The returned `k` is the smallest tick with
/// `P(K <= k | positive) >= u`.
pub fn sample_positive_ticks(u: f64, sigma: f64, xi: f64) -> u32 {
    let base = log_survival(TRUNCATION_MM, sigma, xi);
    if base == f64::NEG_INFINITY {
        return 1;
    }
    // Target: ln S(upper edge of k) <= ln(1 - u) + ln S(0.1)
    let target = (-u).ln_1p() + base;
    let x = inverse_log_survival(target, sigma, xi);
    let mut k = ((10.0 * x - 1.0) / 2.0).ceil().clamp(1.0, MAX_TICKS) as u32;
    let upper_ok = |k: u32| log_survival(bin_edges(k).1, sigma, xi) <= target;
    while k > 1 && upper_ok(k - 1) {
        k -= 1;
    }
    while !upper_ok(k) && (k as f64) < MAX_TICKS {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gpd::gpd_cdf;

    #[test]
    fn grid_validation() {
        assert_eq!(ticks_of(0.0).unwrap(), 0);
        assert_eq!(ticks_of(0.6).unwrap(), 3);
        assert_eq!(ticks_of(12.4).unwrap(), 62);
        assert!(ticks_of(0.3).is_err());
        assert!(ticks_of(-0.2).is_err());
        assert!(emission_prob(0.1, 0.5, 1.0, 0.1).is_err());
        assert_eq!(mm_of(3), 0.6);
    }

    #[test]
    fn zero_reading_is_point_mass() {
        assert_eq!(emission_prob(0.0, 0.88, 1.3, 0.2).unwrap(), 0.88);
    }

    #[test]
    fn first_bin_closed_form() {
        let f = |x| gpd_cdf(x, 1.0, 0.5).unwrap();
        let expected = 0.5 * (f(0.3) - f(0.1)) / (1.0 - f(0.1));
        let got = emission_prob(0.2, 0.5, 1.0, 0.5).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 0.08317580340264641).abs() < 1e-12);
    }

    #[test]
    fn degenerate_zero_mixture() {
        assert_eq!(emission_prob(0.0, 1.0, 1.0, 0.2).unwrap(), 1.0);
        for x in [0.2, 0.4, 5.0] {
            assert_eq!(emission_prob(x, 1.0, 1.0, 0.2).unwrap(), 0.0);
        }
    }

    #[test]
    fn beyond_endpoint_has_zero_mass() {
        // endpoint 1.0 mm
        assert!(emission_prob(0.8, 0.1, 0.5, -0.5).unwrap() > 0.0);
        assert_eq!(emission_prob(1.2, 0.1, 0.5, -0.5).unwrap(), 0.0);
    }

    #[test]
    fn masses_telescope_to_one() {
        for &(sigma, xi) in &[(1.0, 0.5), (0.3, -0.2), (2.0, 0.0), (0.8, 0.95)] {
            let n = 2000;
            let sum: f64 = (1..=n).map(|k| positive_bin_mass(k, sigma, xi)).sum();
            let total = sum + positive_tail_mass(n, sigma, xi);
            assert!((total - 1.0).abs() < 1e-10, "{sigma} {xi}: {total}");
        }
    }

    #[test]
    fn sampler_inverts_grid_cdf() {
        for &(sigma, xi) in &[(1.0, 0.5), (0.3, -0.2), (2.0, 0.0), (0.05, 0.1)] {
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let k = sample_positive_ticks(u, sigma, xi);
                let cdf = |k: u32| 1.0 - positive_tail_mass(k, sigma, xi);
                assert!(cdf(k) >= u - 1e-12, "cdf({k}) < {u}");
                if k > 1 {
                    assert!(cdf(k - 1) < u + 1e-12);
                }
            }
        }
    }
}
