//! Zero-location generalized Pareto distribution.

use crate::error::{Error, Result};

/// Below this |xi| the exponential limit replaces the power form.
pub const XI_EPS: f64 = 1e-6;

/// `ln P(X > x)`; `-inf` at or beyond the upper endpoint when `xi < 0`.
#[inline]
pub fn log_survival(x: f64, sigma: f64, xi: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if xi.abs() <= XI_EPS {
        return -x / sigma;
    }
    let z = xi * x / sigma;
    if z <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -z.ln_1p() / xi
}

pub fn survival(x: f64, sigma: f64, xi: f64) -> f64 {
    log_survival(x, sigma, xi).exp()
}

/// `F(x) = 1 - (1 + xi x / sigma)^(-1/xi)`, with the exponential limit near `xi = 0`.
pub fn gpd_cdf(x: f64, sigma: f64, xi: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "GPD scale must be positive, got {sigma}"
        )));
    }
    Ok(-log_survival(x, sigma, xi).exp_m1())
}

/// Inverse of [`log_survival`]: the `x` with `ln S(x) = log_surv` (`log_surv <= 0`).
pub fn inverse_log_survival(log_surv: f64, sigma: f64, xi: f64) -> f64 {
    if xi.abs() <= XI_EPS {
        -sigma * log_surv
    } else {
        sigma / xi * (-xi * log_surv).exp_m1()
    }
}
