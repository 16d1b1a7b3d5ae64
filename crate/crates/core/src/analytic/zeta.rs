//! The positive part of the blocking NAoI in the M/M case.
//!
//! With `ρ = λ/μ`, the scaled variable `μζ` has transform
//! `(v² + (2ρ+1)v + ρ(ρ+2)) / ((ρ+2)(v+ρ)(v+1)²)` and density `g_ρ`.

/// Below this distance from 1 the `ρ = 1` limit of `g_ρ` is used.
const RHO_ONE_EPS: f64 = 1e-6;

/// Density `g_ρ(t)` of `μζ`.
pub fn zeta_density(rho: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    if (rho - 1.0).abs() < RHO_ONE_EPS {
        return (t * t + 2.0 * t + 2.0) * (-t).exp() / 6.0;
    }
    let d = rho - 1.0;
    let bracket =
        rho * (-rho * t).exp() + (rho * rho - 3.0 * rho + 1.0 + rho * rho * d * t) * (-t).exp();
    bracket / ((rho + 2.0) * d * d)
}

/// `E e^{-v μζ}`.
pub fn zeta_lt(rho: f64, v: f64) -> f64 {
    (v * v + (2.0 * rho + 1.0) * v + rho * (rho + 2.0))
        / ((rho + 2.0) * (v + rho) * (v + 1.0) * (v + 1.0))
}
