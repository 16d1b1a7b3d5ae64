//! Blocking with i.i.d. interarrival and service times.
//!
//! Closed forms cover exponential interarrivals (`mgi_*`), exponential
//! services (`gim_*`) and both (`mm_*`). The general case reads everything
//! off the renewal functions of `τ` averaged over `σ`.

use super::renewal::{BaseFunctions, DiscountedFunctions};
use super::zeta::zeta_lt;
use crate::dist::{cross_moments, DistError, DistSpec};

/// Relative distance to `λ` below which the `u = λ` limits are used.
const U_LAMBDA_EPS: f64 = 1e-6;

pub fn mm_mean_aoi(l: f64, mu: f64) -> f64 {
    1.0 / mu + 1.0 / l + l / (mu * (l + mu))
}

pub fn mm_mean_naoi(l: f64, mu: f64) -> f64 {
    1.0 / mu + l / (mu * (l + mu))
}

pub fn mm_lt_aoi(l: f64, mu: f64, u: f64) -> f64 {
    mu * mu * l * (l + mu + u) / ((l + mu) * (l + u) * (mu + u) * (mu + u))
}

pub fn mm_atom(l: f64, mu: f64) -> f64 {
    (mu / (l + mu)).powi(2)
}

/// `E[e^{-uβ}; β > 0]`: `β` equals `ζ` with probability
/// `λ(λ+2μ)/(λ+μ)²`.
pub fn mm_lt_naoi_positive(l: f64, mu: f64, u: f64) -> f64 {
    l * (l + 2.0 * mu) / (l + mu).powi(2) * zeta_lt(l / mu, u / mu)
}

pub fn mgi_mean_aoi(l: f64, sigma: &DistSpec) -> f64 {
    1.0 / l + mgi_mean_naoi(l, sigma)
}

pub fn mgi_mean_naoi(l: f64, sigma: &DistSpec) -> f64 {
    let es = sigma.mean();
    es + 0.5 * l * sigma.moment(2) / (1.0 + l * es)
}

pub fn mgi_lt_aoi(l: f64, sigma: &DistSpec, u: f64) -> f64 {
    let ls = sigma.laplace(u);
    l / (1.0 + l * sigma.mean()) * (u + l - l * ls) * ls / (u * (u + l))
}

pub fn mgi_atom(l: f64, sigma: &DistSpec) -> f64 {
    sigma.laplace(l) / (1.0 + l * sigma.mean())
}

pub fn mgi_lt_naoi_positive(l: f64, sigma: &DistSpec, u: f64) -> f64 {
    let ls = |s: f64| sigma.laplace(s);
    let (e_h, e_qplus) = if (u - l).abs() < U_LAMBDA_EPS * l {
        let lw = sigma.laplace_weighted(l);
        ((2.0 - 2.0 * ls(l) - l * lw) / l, lw)
    } else {
        (
            (l * l * (1.0 - ls(u)) - u * u * (1.0 - ls(l))) / (l * u * (l - u)),
            (ls(u) - ls(l)) / (l - u),
        )
    };
    let e_w = l * ls(u) / (l + u);
    l / (1.0 + l * sigma.mean()) * (e_w * e_h + e_qplus)
}

pub fn gim_mean_aoi(tau: &DistSpec, mu: f64) -> f64 {
    tau.moment(2) / (2.0 * tau.mean()) + gim_mean_naoi(tau, mu)
}

pub fn gim_mean_naoi(tau: &DistSpec, mu: f64) -> f64 {
    1.0 / mu + tau.laplace_weighted(mu) / (1.0 - tau.laplace(mu))
}

pub fn gim_lt_aoi(tau: &DistSpec, mu: f64, u: f64) -> f64 {
    let l = |s: f64| tau.laplace(s);
    mu / ((mu + u) * u) * (1.0 - l(mu)) * (1.0 - l(u)) / (tau.mean() * (1.0 - l(mu + u)))
}

pub fn gim_atom(tau: &DistSpec, mu: f64) -> f64 {
    let (lm, et) = (tau.laplace(mu), tau.mean());
    (1.0 - lm) * (mu * et - 1.0 + lm) / (mu * et)
}

/// The atom with the opposite sign on `E e^{-μτ}`. It is exposed only to
/// show that it disagrees with [`gim_atom`] and with `μ²/(λ+μ)²` at M/M.
pub fn gim_atom_alternate_sign(tau: &DistSpec, mu: f64) -> f64 {
    let (lm, et) = (tau.laplace(mu), tau.mean());
    (1.0 - lm) * (mu * et - 1.0 - lm) / (mu * et)
}

pub fn gim_lt_naoi_positive(tau: &DistSpec, mu: f64, u: f64) -> f64 {
    let l = |s: f64| tau.laplace(s);
    let et = tau.mean();
    let (lm, lum) = (l(mu), l(u + mu));
    let e_w = (l(u) - lum) / (1.0 - lum);
    let e_h = (1.0 - lm) / (mu * (1.0 - lum));
    let e_qplus = lum * (mu * et - 1.0 + lm) / (mu * (1.0 - lum));
    (e_w * e_h + e_qplus) * (1.0 - lm) / et
}

/// General interarrival and service laws, from grid solutions.
pub struct RenewalRoute<'a> {
    pub tau: &'a DistSpec,
    pub sigma: &'a DistSpec,
    pub base: &'a BaseFunctions,
}

impl RenewalRoute<'_> {
    /// `E U(σ)`, the mean number of arrivals in a cycle.
    pub fn e_u(&self) -> f64 {
        self.base.renewal.expect_against(self.sigma)
    }

    pub fn mean_aoi(&self) -> f64 {
        let m2 = self.base.m2.expect_against(self.sigma);
        self.sigma.mean() + m2 / (2.0 * self.tau.mean() * self.e_u())
    }

    pub fn mean_naoi(&self) -> f64 {
        self.sigma.mean() + self.base.z.expect_against(self.sigma) / self.e_u()
    }

    pub fn lt_aoi(&self, d: &DiscountedFunctions) -> f64 {
        let e_w = d.w.expect_against(self.sigma);
        self.sigma.laplace(d.u) * (1.0 - e_w) / (d.u * self.tau.mean() * self.e_u())
    }

    pub fn atom(&self) -> Result<f64, DistError> {
        let e_pos = cross_moments(self.tau, self.sigma)?.e_pos;
        Ok(e_pos / (self.tau.mean() * self.e_u()))
    }

    /// `E τ E V_u(σ) - E Q_u(σ)`, nonnegative.
    pub fn bracket(&self, d: &DiscountedFunctions) -> f64 {
        self.tau.mean() * d.v.expect_against(self.sigma) - d.q.expect_against(self.sigma)
    }

    pub fn lt_naoi_positive(&self, d: &DiscountedFunctions) -> f64 {
        let e_w = d.w.expect_against(self.sigma);
        let e_qplus = d.q_plus.expect_against(self.sigma);
        (e_w * self.bracket(d) + e_qplus) / (self.tau.mean() * self.e_u())
    }
}
