//! Exact sample paths of the AoI `α(t)` and NAoI `β(t)`, their time
//! averages, and the coupled path comparisons between policies.
//!
//! With `A*_t = max{T_n : ψ_n = 1, T'_n <= t}` and `A_t` the last arrival
//! at or before `t`, the paths are `α(t) = t - A*_t` and `β(t) = A_t - A*_t`.

use serde::Serialize;
use thiserror::Error;

use crate::policies::{simulate, OutcomeSeq, PolicyKind};
use crate::workload::Workload;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoiError {
    #[error("no successful departure at or before window start {0}")]
    EmptyWindow(f64),
    #[error("window [{0}, {1}] is empty")]
    BadWindow(f64, f64),
}

/// `α(t) = t - offset` on `[t0, t1)` for each piece.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPath {
    pub pieces: Vec<(f64, f64, f64)>,
}

/// `β(t) = value` on `[t0, t1)` for each piece.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    pub pieces: Vec<(f64, f64, f64)>,
}

/// Right-continuous record of `A*_t`: it equals `values[k]` on
/// `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Freshness {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Freshness {
    pub fn from_outcomes(w: &Workload, o: &OutcomeSeq) -> Self {
        let mut done: Vec<(f64, f64)> = (0..w.len())
            .filter(|&i| o.psi[i])
            .map(|i| (o.depart[i], w.arrivals[i]))
            .collect();
        done.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (t, a) in done {
            if values.last().is_some_and(|&v| a <= v) {
                continue;
            }
            // Several refreshes at one instant collapse to the largest.
            if times.last() == Some(&t) {
                *values.last_mut().unwrap() = a;
            } else {
                times.push(t);
                values.push(a);
            }
        }
        Self { times, values }
    }

    /// `A*_t`, or `None` before the first successful departure.
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        k.checked_sub(1).map(|k| self.values[k])
    }
}

/// Last arrival at or before `t`.
fn last_arrival(arrivals: &[f64], t: f64) -> Option<f64> {
    let k = arrivals.partition_point(|&a| a <= t);
    k.checked_sub(1).map(|k| arrivals[k])
}

fn check_window(window: (f64, f64)) -> Result<(), AoiError> {
    let (w0, w1) = window;
    if w1.is_nan() || w0.is_nan() || w1 <= w0 {
        return Err(AoiError::BadWindow(w0, w1));
    }
    Ok(())
}

/// Default statistics window: starts at the later of 5% of the horizon and
/// the 100th successful departure, ends at the last successful departure.
pub fn default_window(w: &Workload, o: &OutcomeSeq) -> Result<(f64, f64), AoiError> {
    let mut done: Vec<f64> = (0..w.len())
        .filter(|&i| o.psi[i])
        .map(|i| o.depart[i])
        .collect();
    done.sort_by(f64::total_cmp);
    let horizon = w.arrivals.last().copied().unwrap_or(0.0);
    let Some(&last) = done.last() else {
        return Err(AoiError::EmptyWindow(0.0));
    };
    let hundredth = done[done.len().min(100) - 1];
    let start = hundredth.max(0.05 * horizon);
    if start >= last {
        return Err(AoiError::BadWindow(start, last));
    }
    Ok((start, last))
}

pub fn extract_alpha(
    w: &Workload,
    o: &OutcomeSeq,
    window: (f64, f64),
) -> Result<DriftPath, AoiError> {
    alpha_from(&Freshness::from_outcomes(w, o), window)
}

pub fn alpha_from(f: &Freshness, window: (f64, f64)) -> Result<DriftPath, AoiError> {
    check_window(window)?;
    let (w0, w1) = window;
    let mut offset = f.at(w0).ok_or(AoiError::EmptyWindow(w0))?;
    let mut pieces = Vec::new();
    let mut start = w0;
    let first = f.times.partition_point(|&s| s <= w0);
    for k in first..f.times.len() {
        let t = f.times[k];
        if t >= w1 {
            break;
        }
        pieces.push((start, t, offset));
        start = t;
        offset = f.values[k];
    }
    pieces.push((start, w1, offset));
    Ok(DriftPath { pieces })
}

pub fn extract_beta(
    w: &Workload,
    o: &OutcomeSeq,
    window: (f64, f64),
) -> Result<StepPath, AoiError> {
    beta_from(&w.arrivals, &Freshness::from_outcomes(w, o), window)
}

pub fn beta_from(
    arrivals: &[f64],
    f: &Freshness,
    window: (f64, f64),
) -> Result<StepPath, AoiError> {
    check_window(window)?;
    let (w0, w1) = window;
    let star0 = f.at(w0).ok_or(AoiError::EmptyWindow(w0))?;
    // A*_t <= t and A*_t is an arrival, so A_t exists here.
    let a0 = last_arrival(arrivals, w0).expect("an arrival precedes a departure");

    // Merge the two right-continuous step functions A_t and A*_t.
    let mut ai = arrivals.partition_point(|&a| a <= w0);
    let mut fi = f.times.partition_point(|&s| s <= w0);
    let (mut a, mut star) = (a0, star0);
    let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
    let mut start = w0;
    loop {
        let next_a = arrivals.get(ai).copied().unwrap_or(f64::INFINITY);
        let next_f = f.times.get(fi).copied().unwrap_or(f64::INFINITY);
        let next = next_a.min(next_f).min(w1);
        push_step(&mut pieces, start, next, a - star);
        if next >= w1 {
            break;
        }
        if next_a == next {
            a = next_a;
            ai += 1;
        }
        if next_f == next {
            star = f.values[fi];
            fi += 1;
        }
        start = next;
    }
    Ok(StepPath { pieces })
}

fn push_step(pieces: &mut Vec<(f64, f64, f64)>, t0: f64, t1: f64, v: f64) {
    if t1 <= t0 {
        return;
    }
    match pieces.last_mut() {
        Some(last) if last.2 == v && last.1 == t0 => last.1 = t1,
        _ => pieces.push((t0, t1, v)),
    }
}

impl DriftPath {
    pub fn window(&self) -> (f64, f64) {
        (self.pieces[0].0, self.pieces[self.pieces.len() - 1].1)
    }

    /// `α(t)` for `t` inside the window.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let k = self.pieces.partition_point(|p| p.1 <= t);
        self.pieces.get(k).filter(|p| p.0 <= t).map(|p| t - p.2)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        clipped(&self.pieces, a, b)
            .map(|(t0, t1, c)| 0.5 * ((t1 - c).powi(2) - (t0 - c).powi(2)))
            .sum()
    }

    /// Time-average of `e^{-uα}`.
    pub fn lt(&self, u: f64) -> f64 {
        let (w0, w1) = self.window();
        if u == 0.0 {
            return 1.0;
        }
        let s: f64 = self
            .pieces
            .iter()
            .map(|&(t0, t1, c)| ((-u * (t0 - c)).exp() - (-u * (t1 - c)).exp()) / u)
            .sum();
        s / (w1 - w0)
    }

    /// Time-fraction CDF evaluator.
    pub fn cdf(&self) -> DriftCdf {
        let (w0, w1) = self.window();
        let mut starts: Vec<f64> = self.pieces.iter().map(|p| p.0 - p.2).collect();
        let mut ends: Vec<f64> = self.pieces.iter().map(|p| p.1 - p.2).collect();
        starts.sort_by(f64::total_cmp);
        ends.sort_by(f64::total_cmp);
        DriftCdf {
            start_sums: prefix(&starts),
            end_sums: prefix(&ends),
            starts,
            ends,
            width: w1 - w0,
        }
    }

    pub fn stats(&self, u_grid: &[f64], x_grid: &[f64]) -> PathStats {
        let (w0, w1) = self.window();
        let cdf = self.cdf();
        // Prefix-sum rounding can make neighbouring values dip by an ulp.
        let mut running = 0.0f64;
        let cdf_vals = x_grid
            .iter()
            .map(|&x| {
                running = running.max(cdf.eval(x));
                (x, running)
            })
            .collect();
        PathStats {
            time_mean: self.integral(w0, w1) / (w1 - w0),
            se_mean: batch_se(w0, w1, |a, b| self.integral(a, b)),
            atom_zero: 0.0,
            lt: u_grid.iter().map(|&u| (u, self.lt(u))).collect(),
            cdf: cdf_vals,
            window: (w0, w1),
        }
    }
}

/// `x ↦ fraction of the window with α <= x`, evaluated in `O(log n)`.
pub struct DriftCdf {
    starts: Vec<f64>,
    ends: Vec<f64>,
    start_sums: Vec<f64>,
    end_sums: Vec<f64>,
    width: f64,
}

impl DriftCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let part = |v: &[f64], sums: &[f64]| {
            let k = v.partition_point(|&s| s <= x);
            k as f64 * x - sums[k]
        };
        let m = part(&self.starts, &self.start_sums) - part(&self.ends, &self.end_sums);
        (m / self.width).clamp(0.0, 1.0)
    }

    /// Points where the CDF changes slope.
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.starts.iter().chain(&self.ends).copied()
    }
}

fn prefix(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for &x in v {
        acc += x;
        out.push(acc);
    }
    out
}

impl StepPath {
    pub fn window(&self) -> (f64, f64) {
        (self.pieces[0].0, self.pieces[self.pieces.len() - 1].1)
    }

    pub fn eval(&self, t: f64) -> Option<f64> {
        let k = self.pieces.partition_point(|p| p.1 <= t);
        self.pieces.get(k).filter(|p| p.0 <= t).map(|p| p.2)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        clipped(&self.pieces, a, b)
            .map(|(t0, t1, v)| (t1 - t0) * v)
            .sum()
    }

    fn measure_where<F: Fn(f64) -> bool>(&self, pred: F) -> f64 {
        let (w0, w1) = self.window();
        let m: f64 = self
            .pieces
            .iter()
            .filter(|p| pred(p.2))
            .map(|p| p.1 - p.0)
            .sum();
        m / (w1 - w0)
    }

    pub fn lt(&self, u: f64) -> f64 {
        let (w0, w1) = self.window();
        let s: f64 = self
            .pieces
            .iter()
            .map(|&(t0, t1, v)| (t1 - t0) * (-u * v).exp())
            .sum();
        s / (w1 - w0)
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        self.measure_where(|v| v <= x)
    }

    pub fn atom_zero(&self) -> f64 {
        self.measure_where(|v| v == 0.0)
    }

    pub fn stats(&self, u_grid: &[f64], x_grid: &[f64]) -> PathStats {
        let (w0, w1) = self.window();
        let mut vals: Vec<(f64, f64)> = self.pieces.iter().map(|p| (p.2, p.1 - p.0)).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let cum = prefix(&vals.iter().map(|v| v.1).collect::<Vec<_>>());
        let width = w1 - w0;
        let cdf = x_grid
            .iter()
            .map(|&x| {
                let k = vals.partition_point(|v| v.0 <= x);
                (x, cum[k] / width)
            })
            .collect();
        PathStats {
            time_mean: self.integral(w0, w1) / width,
            se_mean: batch_se(w0, w1, |a, b| self.integral(a, b)),
            atom_zero: self.atom_zero(),
            lt: u_grid.iter().map(|&u| (u, self.lt(u))).collect(),
            cdf,
            window: (w0, w1),
        }
    }
}

/// Pieces restricted to `[a, b)`.
fn clipped(
    pieces: &[(f64, f64, f64)],
    a: f64,
    b: f64,
) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    let k = pieces.partition_point(|p| p.1 <= a);
    pieces[k..]
        .iter()
        .take_while(move |p| p.0 < b)
        .map(move |&(t0, t1, c)| (t0.max(a), t1.min(b), c))
}

/// Number of equal-length time batches behind the standard errors.
pub const BATCHES: usize = 20;

fn batch_se<F: Fn(f64, f64) -> f64>(w0: f64, w1: f64, integral: F) -> f64 {
    let len = (w1 - w0) / BATCHES as f64;
    let means: Vec<f64> = (0..BATCHES)
        .map(|i| {
            let a = w0 + i as f64 * len;
            integral(a, a + len) / len
        })
        .collect();
    let m = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (var / BATCHES as f64).sqrt()
}

/// Exact time-average functionals of a path over its window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub time_mean: f64,
    /// Batch-means standard error of `time_mean`.
    pub se_mean: f64,
    /// Fraction of the window where the path is exactly 0 (NAoI only).
    pub atom_zero: f64,
    pub lt: Vec<(f64, f64)>,
    pub cdf: Vec<(f64, f64)>,
    pub window: (f64, f64),
}

/// Kolmogorov–Smirnov distance between the time-CDF of an AoI path and a
/// continuous reference CDF. The path CDF is piecewise linear, so the
/// supremum is searched on the path's slope-change points plus a uniform
/// grid of `extra` points over the bulk of the range.
pub fn ks_distance<F: Fn(f64) -> f64>(path: &DriftPath, reference: F, extra: usize) -> f64 {
    let cdf = path.cdf();
    let mut xs: Vec<f64> = cdf.knots().collect();
    xs.sort_by(f64::total_cmp);
    let hi = xs.last().copied().unwrap_or(0.0);
    xs.extend((0..=extra).map(|i| hi * i as f64 / extra as f64));
    // Thin very dense knot sets; a sample of 20k points already resolves
    // the supremum to well below 1e-3 at typical horizons.
    let stride = (xs.len() / 20_000).max(1);
    xs.iter()
        .step_by(stride)
        .map(|&x| (cdf.eval(x) - reference(x)).abs())
        .fold(0.0, f64::max)
}

/// Result of the path-wise identity between preemptive LIFO and pushout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualityReport {
    pub equal: bool,
    pub first_mismatch: Option<f64>,
    pub pieces_alpha: usize,
    pub pieces_beta: usize,
}

/// Simulates preemptive LIFO and pushout on `w` and compares their AoI and
/// NAoI paths piece for piece, with exact floating-point equality.
pub fn check_observation1(w: &Workload) -> EqualityReport {
    let po = Freshness::from_outcomes(w, &simulate(PolicyKind::Pushout, w));
    let pl = Freshness::from_outcomes(w, &simulate(PolicyKind::PreemptiveLifo, w));

    let mismatch_in_records = po
        .times
        .iter()
        .zip(&po.values)
        .zip(pl.times.iter().zip(&pl.values))
        .find(|((t1, v1), (t2, v2))| t1.to_bits() != t2.to_bits() || v1.to_bits() != v2.to_bits())
        .map(|((t1, _), (t2, _))| t1.min(*t2));
    let len_mismatch = (po.times.len() != pl.times.len()).then(|| {
        let k = po.times.len().min(pl.times.len());
        po.times
            .get(k)
            .or(pl.times.get(k))
            .copied()
            .unwrap_or(f64::NAN)
    });

    let (mut pieces_alpha, mut pieces_beta) = (0, 0);
    let mut path_mismatch = None;
    if let (Some(&t0), Some(&t1)) = (po.times.first(), po.times.last()) {
        if t1 > t0 {
            let win = (t0, t1);
            let pairs = (alpha_from(&po, win), alpha_from(&pl, win));
            let betas = (
                beta_from(&w.arrivals, &po, win),
                beta_from(&w.arrivals, &pl, win),
            );
            match (pairs, betas) {
                ((Ok(a1), Ok(a2)), (Ok(b1), Ok(b2))) => {
                    pieces_alpha = a1.pieces.len();
                    pieces_beta = b1.pieces.len();
                    path_mismatch = first_diff(&a1.pieces, &a2.pieces)
                        .into_iter()
                        .chain(first_diff(&b1.pieces, &b2.pieces))
                        .reduce(f64::min);
                }
                _ => path_mismatch = Some(t0),
            }
        }
    }
    let first_mismatch = [mismatch_in_records, len_mismatch, path_mismatch]
        .into_iter()
        .flatten()
        .reduce(f64::min);
    EqualityReport {
        equal: first_mismatch.is_none(),
        first_mismatch,
        pieces_alpha,
        pieces_beta,
    }
}

fn first_diff(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)]) -> Option<f64> {
    let same = |x: &(f64, f64, f64), y: &(f64, f64, f64)| {
        x.0.to_bits() == y.0.to_bits()
            && x.1.to_bits() == y.1.to_bits()
            && x.2.to_bits() == y.2.to_bits()
    };
    for (x, y) in a.iter().zip(b) {
        if !same(x, y) {
            return Some(x.0.min(y.0));
        }
    }
    if a.len() != b.len() {
        let k = a.len().min(b.len());
        return a.get(k).or(b.get(k)).map(|p| p.0);
    }
    None
}

/// One epoch where the dominance `α_upper >= α_lower` (equivalently for β) fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub alpha_upper: f64,
    pub alpha_lower: f64,
    pub beta_upper: f64,
    pub beta_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub upper: PolicyKind,
    pub lower: PolicyKind,
    pub epochs_checked: usize,
    pub violations: Vec<Violation>,
    /// The two policies produced identical outcomes, so the comparison only
    /// shows equality.
    pub degenerate: bool,
}

/// At every successful departure epoch of `lower`, checks that `upper` has
/// AoI and NAoI at least as large.
pub fn check_dominance(w: &Workload, upper: PolicyKind, lower: PolicyKind) -> DominanceReport {
    let ou = simulate(upper, w);
    let ol = simulate(lower, w);
    let fu = Freshness::from_outcomes(w, &ou);
    let fl = Freshness::from_outcomes(w, &ol);
    let mut epochs: Vec<f64> = (0..w.len())
        .filter(|&i| ol.psi[i])
        .map(|i| ol.depart[i])
        .collect();
    epochs.sort_by(f64::total_cmp);
    epochs.dedup();
    let mut violations = Vec::new();
    for &t in &epochs {
        let star_l = fl.at(t).expect("a success happened at t");
        let a_t = last_arrival(&w.arrivals, t).expect("arrival precedes departure");
        // Before `upper` has any success its age is unbounded.
        let Some(star_u) = fu.at(t) else { continue };
        if star_u > star_l {
            violations.push(Violation {
                t,
                alpha_upper: t - star_u,
                alpha_lower: t - star_l,
                beta_upper: a_t - star_u,
                beta_lower: a_t - star_l,
            });
        }
    }
    DominanceReport {
        upper,
        lower,
        epochs_checked: epochs.len(),
        violations,
        degenerate: ou.same_outcomes(&ol),
    }
}

/// FIFO against the pushout-with-one-waiting-slot system.
pub fn check_observation2(w: &Workload) -> DominanceReport {
    check_dominance(w, PolicyKind::Fifo, PolicyKind::PushoutTwo)
}

/// CSV rows `t0,t1,offset` for an AoI path.
pub fn drift_csv(p: &DriftPath) -> String {
    let mut s = String::from("t0,t1,offset\n");
    for (a, b, c) in &p.pieces {
        s.push_str(&format!("{a},{b},{c}\n"));
    }
    s
}

/// CSV rows `t0,t1,value` for an NAoI path.
pub fn step_csv(p: &StepPath) -> String {
    let mut s = String::from("t0,t1,value\n");
    for (a, b, c) in &p.pieces {
        s.push_str(&format!("{a},{b},{c}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistSpec;
    use crate::workload::generate;
    use proptest::prelude::*;

    fn hand() -> Workload {
        Workload::from_times(vec![1.0, 2.0, 3.5], vec![0.5, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn pushout_hand_trace_alpha() {
        let w = hand();
        let o = simulate(PolicyKind::Pushout, &w);
        let a = extract_alpha(&w, &o, (1.5, 4.5)).unwrap();
        assert_eq!(a.pieces, vec![(1.5, 4.5, 1.0)]);
    }

    #[test]
    fn pushout_hand_trace_beta() {
        let w = hand();
        let o = simulate(PolicyKind::Pushout, &w);
        let b = extract_beta(&w, &o, (1.5, 4.5)).unwrap();
        assert_eq!(
            b.pieces,
            vec![(1.5, 2.0, 0.0), (2.0, 3.5, 1.0), (3.5, 4.5, 2.5)]
        );
        // Past message 3's departure the processor is fresh again.
        let b = extract_beta(&w, &o, (1.5, 6.0)).unwrap();
        assert_eq!(b.eval(5.0), Some(0.0));
    }

    #[test]
    fn single_message() {
        let w = Workload::from_times(vec![1.0], vec![0.5]).unwrap();
        let o = simulate(PolicyKind::Pushout, &w);
        let a = extract_alpha(&w, &o, (1.5, 3.0)).unwrap();
        assert_eq!(a.pieces, vec![(1.5, 3.0, 1.0)]);
        let b = extract_beta(&w, &o, (1.5, 3.0)).unwrap();
        assert_eq!(b.pieces, vec![(1.5, 3.0, 0.0)]);
    }

    #[test]
    fn empty_window_reported() {
        let w = hand();
        let o = simulate(PolicyKind::Pushout, &w);
        assert_eq!(
            extract_alpha(&w, &o, (1.2, 3.0)),
            Err(AoiError::EmptyWindow(1.2))
        );
    }

    #[test]
    fn constant_zero_step_stats() {
        let p = StepPath {
            pieces: vec![(0.0, 1.0, 0.0)],
        };
        let s = p.stats(&[0.5, 1.0, 7.0], &[0.0, 1.0]);
        assert_eq!(s.time_mean, 0.0);
        assert_eq!(s.atom_zero, 1.0);
        assert!(s.lt.iter().all(|&(_, v)| v == 1.0));
    }

    #[test]
    fn unit_drift_stats() {
        let p = DriftPath {
            pieces: vec![(0.0, 1.0, 0.0)],
        };
        let s = p.stats(&[1.0], &[0.25, 2.0]);
        assert!((s.time_mean - 0.5).abs() < 1e-15);
        assert!((s.lt[0].1 - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((s.cdf[0].1 - 0.25).abs() < 1e-15);
        assert_eq!(s.cdf[1].1, 1.0);
    }

    #[test]
    fn observation1_on_hand_trace() {
        assert!(check_observation1(&hand()).equal);
    }

    #[test]
    fn observation2_single_message_is_equality() {
        let w = Workload::from_times(vec![1.0], vec![0.5]).unwrap();
        let r = check_observation2(&w);
        assert!(r.violations.is_empty());
        assert!(r.degenerate);
        assert_eq!(r.epochs_checked, 1);
    }

    #[test]
    fn dominance_harness_flags_identical_policies() {
        let w = generate(&DistSpec::exp(1.0), &DistSpec::exp(1.2), 2000, 9).unwrap();
        let r = check_dominance(&w, PolicyKind::Fifo, PolicyKind::Fifo);
        assert!(r.degenerate && r.violations.is_empty());
        assert!(!check_observation2(&w).degenerate);
    }

    #[test]
    fn dominance_harness_detects_violations() {
        // Pushout is fresher than FIFO, so swapping roles must fail somewhere.
        let w = generate(&DistSpec::exp(1.0), &DistSpec::exp(1.2), 2000, 9).unwrap();
        let r = check_dominance(&w, PolicyKind::Pushout, PolicyKind::Fifo);
        assert!(!r.violations.is_empty());
    }

    fn law() -> impl Strategy<Value = DistSpec> {
        prop_oneof![
            (0.3f64..3.0).prop_map(DistSpec::exp),
            (0.2f64..2.0).prop_map(DistSpec::det),
            (0.1f64..1.0, 0.1f64..2.0).prop_map(|(a, w)| DistSpec::uniform(a, a + w)),
        ]
    }

    fn case() -> impl Strategy<Value = (Workload, PolicyKind)> {
        let pol = prop_oneof![
            Just(PolicyKind::Pushout),
            Just(PolicyKind::Blocking),
            Just(PolicyKind::PushoutTwo),
            Just(PolicyKind::Fifo),
            Just(PolicyKind::PreemptiveLifo),
            Just(PolicyKind::BlockThenPush { ell: 1 }),
        ];
        (law(), law(), 20usize..300, any::<u64>(), pol)
            .prop_map(|(t, s, n, seed, p)| (generate(&t, &s, n, seed).unwrap(), p))
    }

    fn window_of(w: &Workload, o: &OutcomeSeq) -> Option<(f64, f64)> {
        let f = Freshness::from_outcomes(w, o);
        let (a, b) = (*f.times.first()?, *f.times.last()?);
        (b > a).then_some((a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn path_shape_invariants((w, p) in case()) {
            let o = simulate(p, &w);
            let Some(win) = window_of(&w, &o) else { return Ok(()) };
            let a = extract_alpha(&w, &o, win).unwrap();
            let b = extract_beta(&w, &o, win).unwrap();
            for pair in a.pieces.windows(2) {
                prop_assert_eq!(pair[0].1, pair[1].0);
                // α jumps down: the offset increases.
                prop_assert!(pair[1].2 > pair[0].2);
            }
            for piece in &a.pieces {
                prop_assert!(piece.0 - piece.2 >= 0.0);
            }
            for pair in b.pieces.windows(2) {
                prop_assert_eq!(pair[0].1, pair[1].0);
            }
            prop_assert!(b.pieces.iter().all(|p| p.2 >= 0.0));
        }

        #[test]
        fn alpha_is_age_of_last_arrival_plus_beta((w, p) in case()) {
            let o = simulate(p, &w);
            let Some(win) = window_of(&w, &o) else { return Ok(()) };
            let a = extract_alpha(&w, &o, win).unwrap();
            let b = extract_beta(&w, &o, win).unwrap();
            let mut ts: Vec<f64> = b.pieces.iter().flat_map(|p| [p.0, 0.5 * (p.0 + p.1)]).collect();
            ts.extend(a.pieces.iter().map(|p| 0.5 * (p.0 + p.1)));
            for t in ts {
                let at = last_arrival(&w.arrivals, t).unwrap();
                let lhs = a.eval(t).unwrap();
                let rhs = (t - at) + b.eval(t).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * t.max(1.0));
            }
        }

        #[test]
        fn exact_stats_match_fine_grid((w, p) in case()) {
            let o = simulate(p, &w);
            let Some(win) = window_of(&w, &o) else { return Ok(()) };
            let a = extract_alpha(&w, &o, win).unwrap();
            let b = extract_beta(&w, &o, win).unwrap();
            let sa = a.stats(&[0.7], &[1.0]);
            let sb = b.stats(&[0.7], &[1.0]);
            // Midpoint rule with step 1e-3.
            let n = ((win.1 - win.0) / 1e-3).ceil() as usize;
            let h = (win.1 - win.0) / n as f64;
            let (mut ma, mut mb, mut la, mut lb) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let t = win.0 + (i as f64 + 0.5) * h;
                let (x, y) = (a.eval(t).unwrap(), b.eval(t).unwrap());
                ma += x * h; mb += y * h;
                la += (-0.7 * x).exp() * h; lb += (-0.7 * y).exp() * h;
            }
            let width = win.1 - win.0;
            let rel = |est: f64, exact: f64| (est - exact).abs() <= 1e-3 * exact.abs().max(1e-3);
            prop_assert!(rel(ma / width, sa.time_mean));
            prop_assert!(rel(la / width, sa.lt[0].1));
            prop_assert!(rel(lb / width, sb.lt[0].1));
            // The NAoI path jumps, so a grid that misses a jump point is off by at most
            // two cells per piece.
            let tol = 2.0 * h * b.pieces.len() as f64 * b.pieces.iter().map(|p| p.2).fold(0.0, f64::max) / width;
            prop_assert!((mb / width - sb.time_mean).abs() <= tol + 1e-3 * sb.time_mean);
        }

        #[test]
        fn cdf_is_nondecreasing((w, p) in case()) {
            let o = simulate(p, &w);
            let Some(win) = window_of(&w, &o) else { return Ok(()) };
            let a = extract_alpha(&w, &o, win).unwrap();
            let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
            let s = a.stats(&[], &xs);
            prop_assert!(s.cdf.windows(2).all(|c| c[0].1 <= c[1].1));
            let b = extract_beta(&w, &o, win).unwrap().stats(&[], &xs);
            prop_assert!(b.cdf.windows(2).all(|c| c[0].1 <= c[1].1));
            prop_assert!((0.0..=1.0).contains(&b.atom_zero));
        }

        #[test]
        fn observation1_holds(t in law(), s in law(), n in 1usize..400, seed in any::<u64>()) {
            let w = generate(&t, &s, n, seed).unwrap();
            let r = check_observation1(&w);
            prop_assert!(r.equal, "mismatch at {:?}", r.first_mismatch);
        }

        #[test]
        fn observation2_holds(t in law(), s in law(), n in 1usize..400, seed in any::<u64>()) {
            let w = generate(&t, &s, n, seed).unwrap();
            prop_assert!(check_observation2(&w).violations.is_empty());
        }
    }
}
