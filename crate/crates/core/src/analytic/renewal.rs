//! Renewal-type Volterra equations `f(t) = g(t) + E[w(τ) f(t-τ); τ <= t]`
//! on a uniform grid.
//!
//! Grid functions store the right-continuous version of the solution. Jumps
//! can only sit on sums of atoms of `τ`; nodes reached that way are marked
//! as breaks and carry a left limit, obtained by linear extrapolation from
//! the two preceding nodes.

use super::AnalyticError;
use crate::dist::DistSpec;

/// Step and horizon for the grid solvers. `None` picks the defaults
/// `h = E τ / 200` and `t_max = 40 max(E τ, E σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub h: Option<f64>,
    pub t_max: Option<f64>,
    /// `StepTooCoarse` is raised when `h > E τ / coarse_ratio`.
    pub coarse_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: None,
            t_max: None,
            coarse_ratio: 20.0,
        }
    }
}

/// A resolved uniform grid `t_k = k h`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub h: f64,
    pub n: usize,
}

impl Grid {
    pub fn t_max(&self) -> f64 {
        self.n as f64 * self.h
    }
}

impl SolverConfig {
    pub fn with_step(h: f64, t_max: f64) -> Self {
        Self {
            h: Some(h),
            t_max: Some(t_max),
            ..Self::default()
        }
    }

    pub fn resolve(&self, tau: &DistSpec, sigma: Option<&DistSpec>) -> Result<Grid, AnalyticError> {
        let et = tau.mean();
        let h = self.h.unwrap_or(et / 200.0);
        let scale = sigma.map_or(et, |s| et.max(s.mean()));
        let t_max = self.t_max.unwrap_or(40.0 * scale);
        make_grid(h, t_max, et / self.coarse_ratio)
    }
}

fn make_grid(h: f64, t_max: f64, limit: f64) -> Result<Grid, AnalyticError> {
    if !(h > 0.0 && h.is_finite()) || !(t_max > 0.0 && t_max.is_finite()) {
        return Err(AnalyticError::InvalidModel(format!(
            "grid step {h} and horizon {t_max} must be positive"
        )));
    }
    if h > limit {
        return Err(AnalyticError::StepTooCoarse { h, limit });
    }
    let n = ((t_max / h) - 1e-9).ceil().max(2.0) as usize;
    Ok(Grid { h, n })
}

/// Values of a function at `k h`, right-continuous at breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    pub h: f64,
    pub t_max: f64,
    pub values: Vec<f64>,
    breaks: Vec<bool>,
}

impl GridFn {
    fn new(grid: Grid, values: Vec<f64>, breaks: Vec<bool>) -> Self {
        Self {
            h: grid.h,
            t_max: grid.t_max(),
            values,
            breaks,
        }
    }

    fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_break(&self, k: usize) -> bool {
        self.breaks.get(k).copied().unwrap_or(false)
    }

    /// Left limit at node `k`.
    pub fn left_value(&self, k: usize) -> f64 {
        left_of(&self.values, &self.breaks, k)
    }

    fn tail_slope(&self) -> f64 {
        let n = self.n();
        let m = (n / 2).max(1);
        (self.values[n] - self.values[n - m]) / (m as f64 * self.h)
    }

    /// Right-continuous value at `t`, linear between nodes and extrapolated
    /// linearly beyond `t_max`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.n();
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.t_max {
            return self.values[n] + self.tail_slope() * (t - self.t_max);
        }
        let pos = t / self.h;
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if frac < 1e-9 {
            return self.values[k];
        }
        let p = self.values[k];
        let q = self.left_value(k + 1);
        p + (q - p) * frac
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let pos = t / self.h;
        let k = pos.round();
        if (pos - k).abs() < 1e-6 && k >= 1.0 && (k as usize) <= self.n() {
            return self.left_value(k as usize);
        }
        self.eval(t)
    }

    /// `∫_0^∞ e^{-ξ t} f(t) dt`, integrating the piecewise-linear
    /// interpolant exactly and the linear extrapolation beyond `t_max`.
    pub fn laplace(&self, xi: f64) -> f64 {
        let h = self.h;
        let e = (-xi * h).exp();
        let i0 = -(-xi * h).exp_m1() / xi;
        let i1 = (1.0 - e * (1.0 + xi * h)) / (xi * xi);
        let mut acc = 0.0;
        let mut disc = 1.0;
        for j in 1..=self.n() {
            let p = self.values[j - 1];
            let q = self.left_value(j);
            acc += disc * (p * i0 + (q - p) / h * i1);
            disc *= e;
        }
        let tail =
            (-xi * self.t_max).exp() * (self.values[self.n()] / xi + self.tail_slope() / (xi * xi));
        acc + tail
    }

    /// `E f(σ-)` for `σ` independent of the grid. Atoms of `σ` see the left
    /// limit; mass beyond `t_max` sees the linear extrapolation.
    pub fn expect_against(&self, sigma: &DistSpec) -> f64 {
        let n = self.n();
        let mut a = vec![0.0; n + 1];
        let mut b = vec![0.0; n + 1];
        sigma.add_cell_weights(self.h, 1.0, false, &mut a, &mut b);
        let mut acc = 0.0;
        for j in 1..=n {
            acc += a[j] * self.values[j - 1] + b[j] * self.left_value(j);
        }
        for (pos, mass) in sigma.atoms() {
            if pos <= self.t_max {
                acc += mass * self.eval_left(pos);
            }
        }
        acc + sigma.sf(self.t_max) * self.values[n]
            + self.tail_slope() * sigma.expected_excess(self.t_max)
    }
}

fn left_of(values: &[f64], breaks: &[bool], k: usize) -> f64 {
    if k == 0 || !breaks[k] {
        values[k]
    } else if k >= 2 && !breaks[k - 1] {
        2.0 * values[k - 1] - values[k - 2]
    } else {
        values[k - 1]
    }
}

/// Nodes reachable as finite sums of atoms of `τ` that sit on the grid.
fn reachable(tau: &DistSpec, grid: Grid) -> Vec<bool> {
    let steps: Vec<usize> = tau
        .atoms()
        .into_iter()
        .filter_map(|(x, _)| {
            let pos = x / grid.h;
            let k = pos.round();
            ((pos - k).abs() < 1e-6 && k >= 1.0).then_some(k as usize)
        })
        .collect();
    let mut reach = vec![false; grid.n + 1];
    if steps.is_empty() {
        return reach;
    }
    reach[0] = true;
    for k in 0..=grid.n {
        if reach[k] {
            for &s in &steps {
                if k + s <= grid.n {
                    reach[k + s] = true;
                }
            }
        }
    }
    reach[0] = false;
    reach
}

/// Product-trapezoid weights of `E[w(τ) φ(τ)]` on the grid: `left[m]`
/// multiplies `φ(x_m+)` (from cell `m+1`) and `right[m]` multiplies
/// `φ(x_m-)` (from cell `m` and atoms on node `m`).
struct Kernel {
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Kernel {
    fn new(tau: &DistSpec, grid: Grid, weight: &dyn Fn(f64) -> f64) -> Self {
        let n = grid.n;
        let mut a = vec![0.0; n + 2];
        let mut b = vec![0.0; n + 2];
        tau.add_cell_weights(grid.h, 1.0, true, &mut a, &mut b);
        let mut left = vec![0.0; n + 1];
        let mut right = vec![0.0; n + 1];
        for m in 0..=n {
            let w = weight(m as f64 * grid.h);
            left[m] = w * a[m + 1];
            right[m] = w * b[m];
        }
        Self { left, right }
    }

    /// `E[w(τ) f(t_k - τ); τ <= t_k]` from `f` and its left limits, skipping
    /// the lag-0 term.
    fn history(&self, f: &[f64], fl: &[f64], k: usize) -> f64 {
        let mut acc = 0.0;
        for m in 1..k {
            acc += self.left[m] * fl[k - m] + self.right[m] * f[k - m];
        }
        acc + self.right[k] * f[0]
    }
}

fn check_weight(weight: &dyn Fn(f64) -> f64, grid: Grid) -> Result<(), AnalyticError> {
    for k in [0, grid.n / 2, grid.n] {
        let w = weight(k as f64 * grid.h);
        if w.is_nan() || w.abs() > 1.0 + 1e-12 {
            return Err(AnalyticError::InvalidModel(format!(
                "kernel weight {w} at {} exceeds 1 in absolute value",
                k as f64 * grid.h
            )));
        }
    }
    Ok(())
}

fn solve_on(forcing: &[f64], weight: &dyn Fn(f64) -> f64, tau: &DistSpec, grid: Grid) -> GridFn {
    let kern = Kernel::new(tau, grid, weight);
    let breaks = reachable(tau, grid);
    let n = grid.n;
    let mut f = vec![0.0; n + 1];
    let mut fl = vec![0.0; n + 1];
    f[0] = forcing[0];
    fl[0] = forcing[0];
    let c0 = kern.left[0];
    for k in 1..=n {
        let rest = forcing[k] + kern.history(&f, &fl, k);
        if breaks[k] {
            fl[k] = left_of(&f, &breaks, k);
            f[k] = rest + c0 * fl[k];
        } else {
            f[k] = rest / (1.0 - c0);
            fl[k] = f[k];
        }
    }
    GridFn::new(grid, f, breaks)
}

/// Solves `f(t) = g(t) + E[w(τ) f(t-τ); τ <= t]` on `[0, t_max]` with step
/// `h`. Fails with `StepTooCoarse` when `h > E τ / 20`.
pub fn solve_volterra<G, W>(
    forcing: G,
    weight: W,
    tau: &DistSpec,
    t_max: f64,
    h: f64,
) -> Result<GridFn, AnalyticError>
where
    G: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    tau.validate()?;
    let grid = SolverConfig::with_step(h, t_max).resolve(tau, None)?;
    solve_grid(&forcing, &weight, tau, grid)
}

fn solve_grid(
    forcing: &dyn Fn(f64) -> f64,
    weight: &dyn Fn(f64) -> f64,
    tau: &DistSpec,
    grid: Grid,
) -> Result<GridFn, AnalyticError> {
    check_weight(weight, grid)?;
    // Nudge nodes to the right so that forcings jumping on a node take
    // their right value despite rounding in `k h`.
    let g: Vec<f64> = (0..=grid.n)
        .map(|k| match k {
            0 => forcing(0.0),
            _ => forcing((k as f64 + 1e-9) * grid.h),
        })
        .collect();
    Ok(solve_on(&g, weight, tau, grid))
}

/// `E[w(τ) f(t-τ); τ <= t]` on the grid of `f`.
pub fn convolve(f: &GridFn, tau: &DistSpec, weight: &dyn Fn(f64) -> f64) -> GridFn {
    let grid = Grid { h: f.h, n: f.n() };
    let kern = Kernel::new(tau, grid, weight);
    let fl: Vec<f64> = (0..=grid.n).map(|k| f.left_value(k)).collect();
    let mut out = vec![0.0; grid.n + 1];
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        *o = kern.history(&f.values, &fl, k) + kern.left[0] * fl[k];
    }
    GridFn::new(grid, out, reachable(tau, grid))
}

/// Functions of the renewal process of `τ` that do not depend on `u`.
#[derive(Debug, Clone)]
pub struct BaseFunctions {
    /// `U(t)`, expected number of renewals in `[0, t]`.
    pub renewal: GridFn,
    /// `(U*U)(t)`.
    pub u_conv_u: GridFn,
    /// `M_2(t)`, second moment of the first renewal after `t`.
    pub m2: GridFn,
    pub z: GridFn,
}

/// Functions of the renewal process of `τ` discounted at rate `u`.
#[derive(Debug, Clone)]
pub struct DiscountedFunctions {
    pub u: f64,
    pub w: GridFn,
    pub v: GridFn,
    pub q: GridFn,
    /// `E[e^{-uτ} Q_u(t-τ); τ <= t]`.
    pub q_plus: GridFn,
}

#[derive(Debug, Clone)]
pub struct RenewalFunctions {
    pub base: BaseFunctions,
    pub discounted: DiscountedFunctions,
}

pub(crate) fn base_on(tau: &DistSpec, grid: Grid) -> Result<BaseFunctions, AnalyticError> {
    let one = |_: f64| 1.0;
    let renewal = solve_grid(&one, &one, tau, grid)?;
    // U*U = U + F*(U*U)
    let u_conv_u = solve_on(&renewal.values, &one, tau, grid);
    let (m1, m2) = (tau.mean(), tau.moment(2));
    let tau_r = convolve(&u_conv_u, tau, &|x| x);
    let m2_vals = renewal
        .values
        .iter()
        .zip(&tau_r.values)
        .map(|(u, r)| m2 * u + 2.0 * m1 * r)
        .collect();
    let m2_fn = GridFn::new(grid, m2_vals, renewal.breaks.clone());
    let tau_u = convolve(&renewal, tau, &|x| x);
    let z = solve_on(&tau_u.values, &one, tau, grid);
    Ok(BaseFunctions {
        renewal,
        u_conv_u,
        m2: m2_fn,
        z,
    })
}

pub(crate) fn discounted_on(
    tau: &DistSpec,
    u: f64,
    grid: Grid,
) -> Result<DiscountedFunctions, AnalyticError> {
    if u.is_nan() || u < 0.0 {
        return Err(AnalyticError::InvalidModel(format!("u = {u} must be >= 0")));
    }
    let disc = move |x: f64| (-u * x).exp();
    let w = solve_grid(&|t| tau.laplace_tail(u, t), &disc, tau, grid)?;
    let v = solve_grid(&|_| 1.0, &disc, tau, grid)?;
    let q = solve_grid(&|t| tau.expected_excess(t), &disc, tau, grid)?;
    let q_plus = convolve(&q, tau, &disc);
    Ok(DiscountedFunctions { u, w, v, q, q_plus })
}

/// All renewal functions of `τ` on `[0, t_max]` with step `h`.
pub fn renewal_functions(
    tau: &DistSpec,
    u: f64,
    t_max: f64,
    h: f64,
) -> Result<RenewalFunctions, AnalyticError> {
    tau.validate()?;
    let grid = SolverConfig::with_step(h, t_max).resolve(tau, None)?;
    Ok(RenewalFunctions {
        base: base_on(tau, grid)?,
        discounted: discounted_on(tau, u, grid)?,
    })
}

/// One transform comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceCheck {
    pub name: &'static str,
    pub numeric: f64,
    pub closed_form: f64,
    pub rel_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceReport {
    pub xi: f64,
    pub u: f64,
    pub checks: Vec<LaplaceCheck>,
    pub max_rel_residual: f64,
}

/// Transforms each grid function numerically and compares it with its
/// closed-form transform in terms of `L(ξ) = E e^{-ξτ}`.
pub fn laplace_checks(
    tau: &DistSpec,
    u: f64,
    xi: f64,
    cfg: &SolverConfig,
) -> Result<LaplaceReport, AnalyticError> {
    let grid = cfg.resolve(tau, None)?;
    let base = base_on(tau, grid)?;
    let disc = discounted_on(tau, u, grid)?;
    Ok(laplace_report(tau, &base, Some(&disc), xi))
}

pub(crate) fn laplace_report(
    tau: &DistSpec,
    base: &BaseFunctions,
    disc: Option<&DiscountedFunctions>,
    xi: f64,
) -> LaplaceReport {
    let u = disc.map_or(f64::NAN, |d| d.u);
    let l = |s: f64| tau.laplace(s);
    let lx = l(xi);
    let lux = l(u + xi);
    let et = tau.mean();
    let lw = tau.laplace_weighted(xi);
    let mut closed = vec![
        ("U", &base.renewal, 1.0 / (xi * (1.0 - lx))),
        (
            "M_2",
            &base.m2,
            tau.moment(2) / (xi * (1.0 - lx)) + 2.0 * et * lw / (xi * (1.0 - lx).powi(2)),
        ),
        ("Z", &base.z, lw / (xi * (1.0 - lx).powi(2))),
    ];
    if let Some(d) = disc {
        let q_hat = (xi * et - 1.0 + lx) / (xi * xi * (1.0 - lux));
        closed.extend([
            ("W_u", &d.w, (l(u) - lux) / (xi * (1.0 - lux))),
            ("V_u", &d.v, 1.0 / (xi * (1.0 - lux))),
            ("Q_u", &d.q, q_hat),
            ("Q_u+", &d.q_plus, lux * q_hat),
        ]);
    }
    let checks: Vec<LaplaceCheck> = closed
        .into_iter()
        .map(|(name, f, c)| {
            let numeric = f.laplace(xi);
            LaplaceCheck {
                name,
                numeric,
                closed_form: c,
                rel_residual: ((numeric - c) / c).abs(),
            }
        })
        .collect();
    let max_rel_residual = checks.iter().map(|c| c.rel_residual).fold(0.0, f64::max);
    LaplaceReport {
        xi,
        u,
        checks,
        max_rel_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_err(f: &GridFn, g: impl Fn(f64) -> f64, upto: f64) -> f64 {
        f.values
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 * f.h, v))
            .take_while(|(t, _)| *t <= upto + 1e-12)
            .map(|(t, v)| (v - g(t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn poisson_renewal_function_is_linear() {
        let tau = DistSpec::exp(1.0);
        let u = solve_volterra(|_| 1.0, |_| 1.0, &tau, 40.0, 5e-3).unwrap();
        assert!(max_err(&u, |t| 1.0 + t, 20.0) < 1e-3);
        assert!((u.eval(2.0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn poisson_w() {
        let tau = DistSpec::exp(1.0);
        let w = solve_volterra(
            |t| tau.laplace_tail(1.0, t),
            |x| (-x).exp(),
            &tau,
            40.0,
            5e-3,
        )
        .unwrap();
        assert!(max_err(&w, |t| 0.5 * (-t).exp(), 20.0) < 1e-3);
        assert!((w.eval(1.0) - 0.18394).abs() < 1e-4);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let tau = DistSpec::uniform(0.5, 1.5);
        let f = solve_volterra(|_| 0.0, |_| 1.0, &tau, 10.0, 0.01).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coarse_step_rejected() {
        let tau = DistSpec::exp(1.0);
        let r = solve_volterra(|_| 1.0, |_| 1.0, &tau, 10.0, 0.2);
        assert!(matches!(r, Err(AnalyticError::StepTooCoarse { .. })));
    }

    #[test]
    fn deterministic_renewal_steps() {
        let tau = DistSpec::det(1.0);
        let u = solve_volterra(|_| 1.0, |_| 1.0, &tau, 10.0, 0.01).unwrap();
        assert!((u.eval(2.5) - 3.0).abs() < 1e-12);
        assert!((u.eval(3.0) - 4.0).abs() < 1e-12);
        assert!((u.eval_left(3.0) - 3.0).abs() < 1e-12);
        assert!(u.is_break(100));
    }

    #[test]
    fn v_and_q_at_zero() {
        for tau in [
            DistSpec::exp(2.0),
            DistSpec::uniform(0.5, 1.5),
            DistSpec::det(1.0),
        ] {
            let r = renewal_functions(&tau, 0.7, 10.0, 0.01).unwrap();
            assert_eq!(r.discounted.v.values[0], 1.0);
            assert!((r.discounted.q.values[0] - tau.mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_spot_values() {
        let tau = DistSpec::exp(1.0);
        let rep = laplace_checks(&tau, 1.0, 1.0, &SolverConfig::default()).unwrap();
        let by = |n: &str| rep.checks.iter().find(|c| c.name == n).unwrap().clone();
        assert!((by("U").closed_form - 2.0).abs() < 1e-12);
        assert!((by("W_u").closed_form - 0.25).abs() < 1e-12);
        assert!(rep.max_rel_residual < 1e-3, "{rep:?}");
    }

    #[test]
    fn transforms_match_closed_forms() {
        for tau in [
            DistSpec::exp(1.0),
            DistSpec::det(1.0),
            DistSpec::uniform(0.5, 1.5),
            DistSpec::erlang(2, 2.0),
        ] {
            let grid = SolverConfig::default().resolve(&tau, None).unwrap();
            let base = base_on(&tau, grid).unwrap();
            let disc = discounted_on(&tau, 1.0, grid).unwrap();
            for xi in [0.5, 1.0, 2.0] {
                let rep = laplace_report(&tau, &base, Some(&disc), xi);
                assert!(rep.max_rel_residual < 1e-3, "{tau} {rep:#?}");
            }
        }
    }

    #[test]
    fn poisson_z_ratio() {
        // E Z(σ) / E U(σ) = λ / (μ (λ + μ)) for exponential σ.
        let tau = DistSpec::exp(1.0);
        let sigma = DistSpec::exp(1.0);
        let grid = SolverConfig::default().resolve(&tau, Some(&sigma)).unwrap();
        let b = base_on(&tau, grid).unwrap();
        let r = b.z.expect_against(&sigma) / b.renewal.expect_against(&sigma);
        assert!((r - 0.5).abs() < 1e-4, "{r}");
    }

    #[test]
    fn expectation_against_atoms_uses_left_limit() {
        let tau = DistSpec::det(1.0);
        let grid = SolverConfig::default().resolve(&tau, None).unwrap();
        let b = base_on(&tau, grid).unwrap();
        // σ ≡ 2: renewals strictly before 2 are at 0 and 1.
        assert!((b.renewal.expect_against(&DistSpec::det(2.0)) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn renewal_function_grows_like_t_over_mean(lo in 0.1f64..0.5, w in 0.5f64..1.5) {
            let tau = DistSpec::uniform(lo, lo + w);
            let grid = SolverConfig::default().resolve(&tau, None).unwrap();
            let b = base_on(&tau, grid).unwrap();
            let u = &b.renewal;
            prop_assert!(u.values.windows(2).all(|p| p[1] >= p[0] - 1e-12));
            // U(t) - t/Eτ → E τ² / (2 (Eτ)²)
            let et = tau.mean();
            let t = u.t_max;
            let lim = tau.moment(2) / (2.0 * et * et);
            prop_assert!((u.eval(t) - t / et - lim).abs() < 1e-3);
        }
    }
}
