//! Pushout with i.i.d. interarrival and service times.

use super::{AnalyticError, ModelSpec};
use crate::dist::{cross_moments, PairLaws};

pub fn mean_aoi(m: &ModelSpec) -> Result<f64, AnalyticError> {
    let et = m.tau.mean();
    Ok(m.tau.moment(2) / (2.0 * et) + mean_naoi(m)?)
}

pub fn mean_naoi(m: &ModelSpec) -> Result<f64, AnalyticError> {
    let c = cross_moments(&m.tau, &m.sigma)?;
    Ok(c.e_min / c.p_ge)
}

/// `α` is the stationary interarrival time plus an independent reading
/// interval; this returns the transform of the latter.
pub fn lt_reading_interval(m: &ModelSpec, u: f64) -> Result<f64, AnalyticError> {
    let pair = PairLaws {
        tau: &m.tau,
        sigma: &m.sigma,
    };
    Ok(pair.lt_sigma_success(u)? / (1.0 - pair.lt_tau_failure(u)?))
}

/// Transform of the stationary version of `τ`, density `P(τ > x)/E τ`.
pub fn lt_stationary_tau(m: &ModelSpec, u: f64) -> f64 {
    -(m.tau.laplace(u) - 1.0) / (u * m.tau.mean())
}

pub fn lt_aoi(m: &ModelSpec, u: f64) -> Result<f64, AnalyticError> {
    Ok(lt_stationary_tau(m, u) * lt_reading_interval(m, u)?)
}

pub fn atom(m: &ModelSpec) -> Result<f64, AnalyticError> {
    Ok(cross_moments(&m.tau, &m.sigma)?.e_pos / m.tau.mean())
}

/// `E[e^{-uβ}; β > 0]`: with probability `E τ∧σ / E τ` the NAoI is a
/// typical cycle length.
pub fn lt_naoi_positive(m: &ModelSpec, u: f64) -> Result<f64, AnalyticError> {
    let pair = PairLaws {
        tau: &m.tau,
        sigma: &m.sigma,
    };
    let cycle = pair.lt_tau_success(u)? / (1.0 - pair.lt_tau_failure(u)?);
    let c = cross_moments(&m.tau, &m.sigma)?;
    Ok(c.e_min / m.tau.mean() * cycle)
}

/// CDF of `α` at M/M: the sum of independent `Exp(λ)` and `Exp(μ)`.
pub fn mm_aoi_cdf(l: f64, mu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if ((l - mu) / mu).abs() < 1e-9 {
        return 1.0 - (-l * x).exp() * (1.0 + l * x);
    }
    1.0 - (mu * (-l * x).exp() - l * (-mu * x).exp()) / (mu - l)
}
