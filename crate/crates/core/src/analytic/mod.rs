//! Stationary AoI/NAoI laws: closed forms and renewal-equation solutions.

pub mod blocking;
pub mod pushout;
pub mod renewal;
pub mod zeta;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{cross_moments, DistError, DistSpec};
use blocking::RenewalRoute;
pub use renewal::{
    convolve, laplace_checks, renewal_functions, solve_volterra, Grid, GridFn, LaplaceCheck,
    LaplaceReport, RenewalFunctions, SolverConfig,
};
pub use zeta::{zeta_density, zeta_lt};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("grid step {h} is coarser than the limit {limit}")]
    StepTooCoarse { h: f64, limit: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("route {route} does not apply to {model}")]
    RouteMismatch { route: Route, model: String },
    #[error("FIFO queue unstable: lambda {lambda} >= mu {mu}")]
    Unstable { lambda: f64, mu: f64 },
    #[error("no sign change of the mean difference on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
}

/// Independent i.i.d. interarrival (`τ`) and service (`σ`) laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub tau: DistSpec,
    pub sigma: DistSpec,
}

impl ModelSpec {
    /// Checks both laws and `P(τ >= σ) > 0`.
    pub fn new(tau: DistSpec, sigma: DistSpec) -> Result<Self, AnalyticError> {
        tau.validate()?;
        sigma.validate()?;
        let p = cross_moments(&tau, &sigma)?.p_ge;
        if p.is_nan() || p <= 0.0 {
            return Err(AnalyticError::InvalidModel(format!(
                "P(tau >= sigma) = {p} for {tau}/{sigma}"
            )));
        }
        Ok(Self { tau, sigma })
    }

    pub fn mm(lambda: f64, mu: f64) -> Result<Self, AnalyticError> {
        Self::new(DistSpec::exp(lambda), DistSpec::exp(mu))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.tau, self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Pushout,
    Blocking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Aoi,
    Naoi,
}

/// Which formula family evaluates a quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    /// The most specific closed form available, else the renewal solver.
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "mm")]
    MM,
    #[serde(rename = "m-gi")]
    MGi,
    #[serde(rename = "gi-m")]
    GiM,
    /// Renewal functions on a grid (blocking) or cross-moments (pushout).
    #[serde(rename = "gi-gi")]
    GiGi,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pushout => "pushout",
            Self::Blocking => "blocking",
        })
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Aoi => "aoi",
            Self::Naoi => "naoi",
        })
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::MM => "mm",
            Self::MGi => "m-gi",
            Self::GiM => "gi-m",
            Self::GiGi => "gi-gi",
        })
    }
}

fn parse_word<T: Copy>(s: &str, table: &[(&str, T)], what: &str) -> Result<T, String> {
    let key = s.trim().to_ascii_lowercase();
    table
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("unknown {what} '{s}'"))
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_word(
            s,
            &[("pushout", Self::Pushout), ("blocking", Self::Blocking)],
            "policy",
        )
    }
}

impl FromStr for Measure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_word(s, &[("aoi", Self::Aoi), ("naoi", Self::Naoi)], "measure")
    }
}

impl FromStr for Route {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_word(
            s,
            &[
                ("auto", Self::Auto),
                ("mm", Self::MM),
                ("m-gi", Self::MGi),
                ("gi-m", Self::GiM),
                ("gi-gi", Self::GiGi),
            ],
            "route",
        )
    }
}

/// A stationary quantity of `α` or `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    Mean(Measure),
    /// `E e^{-uα}`.
    LtAoi(f64),
    /// `E e^{-uβ}`, atom included.
    LtNaoi(f64),
    /// `E[e^{-uβ}; β > 0]`.
    LtNaoiPositive(f64),
    /// `P(β = 0)`.
    Atom,
}

impl Quantity {
    fn u(&self) -> Option<f64> {
        match *self {
            Self::LtAoi(u) | Self::LtNaoi(u) | Self::LtNaoiPositive(u) => Some(u),
            _ => None,
        }
    }
}

/// A value with the route that produced it. Grid fields are set only on the
/// renewal route; `residual` is the largest relative Laplace residual of
/// the grid functions used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    pub method: Route,
    pub h: Option<f64>,
    pub t_max: Option<f64>,
    pub residual: Option<f64>,
}

impl Evaluation {
    fn closed(value: f64, method: Route) -> Self {
        Self {
            value,
            method,
            h: None,
            t_max: None,
            residual: None,
        }
    }
}

fn resolve_route(model: &ModelSpec, route: Route) -> Result<Route, AnalyticError> {
    let l = model.tau.exponential_rate();
    let m = model.sigma.exponential_rate();
    let ok = match route {
        Route::Auto => {
            return Ok(match (l, m) {
                (Some(_), Some(_)) => Route::MM,
                (Some(_), None) => Route::MGi,
                (None, Some(_)) => Route::GiM,
                (None, None) => Route::GiGi,
            })
        }
        Route::MM => l.is_some() && m.is_some(),
        Route::MGi => l.is_some(),
        Route::GiM => m.is_some(),
        Route::GiGi => true,
    };
    if ok {
        Ok(route)
    } else {
        Err(AnalyticError::RouteMismatch {
            route,
            model: model.to_string(),
        })
    }
}

/// Evaluates `q` under `policy` through `route`.
pub fn evaluate(
    model: &ModelSpec,
    policy: Policy,
    q: Quantity,
    route: Route,
    cfg: &SolverConfig,
) -> Result<Evaluation, AnalyticError> {
    if let Some(u) = q.u() {
        if !(u > 0.0 && u.is_finite()) {
            return Err(AnalyticError::InvalidModel(format!(
                "u = {u} must be positive"
            )));
        }
    }
    let route = resolve_route(model, route)?;
    match policy {
        Policy::Pushout => eval_pushout(model, q, route),
        Policy::Blocking => eval_blocking(model, q, route, cfg),
    }
}

fn eval_pushout(m: &ModelSpec, q: Quantity, route: Route) -> Result<Evaluation, AnalyticError> {
    if route == Route::MM {
        let l = m.tau.exponential_rate().unwrap_or_default();
        let mu = m.sigma.exponential_rate().unwrap_or_default();
        let hypo = |u: f64| l / (l + u) * mu / (mu + u);
        let v = match q {
            Quantity::Mean(Measure::Aoi) => 1.0 / l + 1.0 / mu,
            Quantity::Mean(Measure::Naoi) => 1.0 / mu,
            Quantity::LtAoi(u) => hypo(u),
            Quantity::LtNaoi(u) => mu / (l + mu) + l / (l + mu) * hypo(u),
            Quantity::LtNaoiPositive(u) => l / (l + mu) * hypo(u),
            Quantity::Atom => mu / (l + mu),
        };
        return Ok(Evaluation::closed(v, Route::MM));
    }
    let v = match q {
        Quantity::Mean(Measure::Aoi) => pushout::mean_aoi(m)?,
        Quantity::Mean(Measure::Naoi) => pushout::mean_naoi(m)?,
        Quantity::LtAoi(u) => pushout::lt_aoi(m, u)?,
        Quantity::LtNaoi(u) => pushout::atom(m)? + pushout::lt_naoi_positive(m, u)?,
        Quantity::LtNaoiPositive(u) => pushout::lt_naoi_positive(m, u)?,
        Quantity::Atom => pushout::atom(m)?,
    };
    Ok(Evaluation::closed(v, route))
}

fn eval_blocking(
    m: &ModelSpec,
    q: Quantity,
    route: Route,
    cfg: &SolverConfig,
) -> Result<Evaluation, AnalyticError> {
    use blocking as b;
    let (tau, sigma) = (&m.tau, &m.sigma);
    let l = tau.exponential_rate().unwrap_or_default();
    let mu = sigma.exponential_rate().unwrap_or_default();
    let v = match route {
        Route::MM => match q {
            Quantity::Mean(Measure::Aoi) => b::mm_mean_aoi(l, mu),
            Quantity::Mean(Measure::Naoi) => b::mm_mean_naoi(l, mu),
            Quantity::LtAoi(u) => b::mm_lt_aoi(l, mu, u),
            Quantity::LtNaoi(u) => b::mm_atom(l, mu) + b::mm_lt_naoi_positive(l, mu, u),
            Quantity::LtNaoiPositive(u) => b::mm_lt_naoi_positive(l, mu, u),
            Quantity::Atom => b::mm_atom(l, mu),
        },
        Route::MGi => match q {
            Quantity::Mean(Measure::Aoi) => b::mgi_mean_aoi(l, sigma),
            Quantity::Mean(Measure::Naoi) => b::mgi_mean_naoi(l, sigma),
            Quantity::LtAoi(u) => b::mgi_lt_aoi(l, sigma, u),
            Quantity::LtNaoi(u) => b::mgi_atom(l, sigma) + b::mgi_lt_naoi_positive(l, sigma, u),
            Quantity::LtNaoiPositive(u) => b::mgi_lt_naoi_positive(l, sigma, u),
            Quantity::Atom => b::mgi_atom(l, sigma),
        },
        Route::GiM => match q {
            Quantity::Mean(Measure::Aoi) => b::gim_mean_aoi(tau, mu),
            Quantity::Mean(Measure::Naoi) => b::gim_mean_naoi(tau, mu),
            Quantity::LtAoi(u) => b::gim_lt_aoi(tau, mu, u),
            Quantity::LtNaoi(u) => b::gim_atom(tau, mu) + b::gim_lt_naoi_positive(tau, mu, u),
            Quantity::LtNaoiPositive(u) => b::gim_lt_naoi_positive(tau, mu, u),
            Quantity::Atom => b::gim_atom(tau, mu),
        },
        Route::GiGi | Route::Auto => return eval_renewal(m, q, cfg),
    };
    Ok(Evaluation::closed(v, route))
}

fn eval_renewal(
    m: &ModelSpec,
    q: Quantity,
    cfg: &SolverConfig,
) -> Result<Evaluation, AnalyticError> {
    let grid = cfg.resolve(&m.tau, Some(&m.sigma))?;
    let base = renewal::base_on(&m.tau, grid)?;
    let disc = q
        .u()
        .map(|u| renewal::discounted_on(&m.tau, u, grid))
        .transpose()?;
    let r = RenewalRoute {
        tau: &m.tau,
        sigma: &m.sigma,
        base: &base,
    };
    let v = match (q, &disc) {
        (Quantity::Mean(Measure::Aoi), _) => r.mean_aoi(),
        (Quantity::Mean(Measure::Naoi), _) => r.mean_naoi(),
        (Quantity::Atom, _) => r.atom()?,
        (Quantity::LtAoi(_), Some(d)) => r.lt_aoi(d),
        (Quantity::LtNaoi(_), Some(d)) => r.atom()? + r.lt_naoi_positive(d),
        (Quantity::LtNaoiPositive(_), Some(d)) => r.lt_naoi_positive(d),
        _ => unreachable!("transforms always carry u"),
    };
    let xi = 1.0 / m.tau.mean();
    let residual = renewal::laplace_report(&m.tau, &base, disc.as_ref(), xi).max_rel_residual;
    Ok(Evaluation {
        value: v,
        method: Route::GiGi,
        h: Some(grid.h),
        t_max: Some(grid.t_max()),
        residual: Some(residual),
    })
}

pub fn mean(model: &ModelSpec, policy: Policy, measure: Measure) -> Result<f64, AnalyticError> {
    let q = Quantity::Mean(measure);
    Ok(evaluate(model, policy, q, Route::Auto, &SolverConfig::default())?.value)
}

pub fn lt_aoi(model: &ModelSpec, policy: Policy, u: f64) -> Result<f64, AnalyticError> {
    let q = Quantity::LtAoi(u);
    Ok(evaluate(model, policy, q, Route::Auto, &SolverConfig::default())?.value)
}

pub fn lt_naoi(model: &ModelSpec, policy: Policy, u: f64) -> Result<f64, AnalyticError> {
    let q = Quantity::LtNaoi(u);
    Ok(evaluate(model, policy, q, Route::Auto, &SolverConfig::default())?.value)
}

pub fn atom(model: &ModelSpec, policy: Policy) -> Result<f64, AnalyticError> {
    Ok(evaluate(
        model,
        policy,
        Quantity::Atom,
        Route::Auto,
        &SolverConfig::default(),
    )?
    .value)
}

/// Mean AoI of the M/M/1 FIFO queue.
pub fn fifo_mean_aoi_mm(lambda: f64, mu: f64) -> Result<f64, AnalyticError> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(AnalyticError::InvalidModel(format!(
            "rates {lambda}, {mu} must be positive"
        )));
    }
    if lambda >= mu {
        return Err(AnalyticError::Unstable { lambda, mu });
    }
    Ok(1.0 / lambda + 1.0 / mu + (lambda * lambda / (mu * mu)) / (mu - lambda))
}

/// Half `Det(1/3)`, half `Exp(3/5)`: unit mean, squared coefficient of
/// variation well above 1.
pub fn bimodal_service() -> DistSpec {
    DistSpec::mixture(
        vec![0.5, 0.5],
        vec![DistSpec::det(1.0 / 3.0), DistSpec::exp(3.0 / 5.0)],
    )
}

/// Bisection tolerance on the rate for [`crossover`].
pub const CROSSOVER_TOL: f64 = 1e-4;

/// Root in `[lo, hi]` of `λ ↦ mean_pushout(λ) - mean_blocking(λ)` for the
/// model family `family`.
pub fn crossover<F>(family: F, measure: Measure, lo: f64, hi: f64) -> Result<f64, AnalyticError>
where
    F: Fn(f64) -> Result<ModelSpec, AnalyticError>,
{
    let diff = |l: f64| -> Result<f64, AnalyticError> {
        let m = family(l)?;
        Ok(mean(&m, Policy::Pushout, measure)? - mean(&m, Policy::Blocking, measure)?)
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (diff(a)?, diff(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(AnalyticError::NoSignChange { lo, hi });
    }
    while b - a > CROSSOVER_TOL {
        let c = 0.5 * (a + b);
        let fc = diff(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests;
