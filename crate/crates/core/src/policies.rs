//! Admission and service disciplines as state machines over a workload.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::Workload;

/// Service discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyKind {
    /// Every arrival preempts and discards the message in service.
    Pushout,
    /// Arrivals finding the server busy are rejected.
    Blocking,
    /// Per busy period, the first `ell` busy-arrivals are blocked and later ones push out.
    BlockThenPush {
        ell: u32,
    },
    /// Per busy period, the first `ell` busy-arrivals push out and later ones are blocked.
    PushThenBlock {
        ell: u32,
    },
    /// One protected service slot plus one overwritable waiting slot.
    PushoutTwo,
    Fifo,
    /// Preemptive-resume LIFO with an unbounded stack.
    PreemptiveLifo,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown policy `{0}`; expected pushout|blocking|bp:L|pb:L|p2|fifo|plifo")]
pub struct ParsePolicyError(pub String);

impl FromStr for PolicyKind {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParsePolicyError(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        let ell = |rest: &str| rest.parse::<u32>().map_err(|_| err());
        match lower.as_str() {
            "pushout" | "p" => Ok(Self::Pushout),
            "blocking" | "b" => Ok(Self::Blocking),
            "p2" => Ok(Self::PushoutTwo),
            "fifo" => Ok(Self::Fifo),
            "plifo" => Ok(Self::PreemptiveLifo),
            other => {
                if let Some(rest) = other.strip_prefix("bp:") {
                    Ok(Self::BlockThenPush { ell: ell(rest)? })
                } else if let Some(rest) = other.strip_prefix("pb:") {
                    Ok(Self::PushThenBlock { ell: ell(rest)? })
                } else {
                    Err(err())
                }
            }
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pushout => write!(f, "pushout"),
            Self::Blocking => write!(f, "blocking"),
            Self::BlockThenPush { ell } => write!(f, "bp:{ell}"),
            Self::PushThenBlock { ell } => write!(f, "pb:{ell}"),
            Self::PushoutTwo => write!(f, "p2"),
            Self::Fifo => write!(f, "fifo"),
            Self::PreemptiveLifo => write!(f, "plifo"),
        }
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = ParsePolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyKind> for String {
    fn from(p: PolicyKind) -> Self {
        p.to_string()
    }
}

/// Non-fatal conditions raised while simulating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SimWarning {
    /// FIFO with mean service at least the mean interarrival time; the
    /// backlog grows without bound.
    Instability {
        mean_service: f64,
        mean_interarrival: f64,
    },
}

impl fmt::Display for SimWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Instability {
                mean_service,
                mean_interarrival,
            } => write!(
                f,
                "InstabilityWarning: mean service {mean_service} >= mean interarrival {mean_interarrival}"
            ),
        }
    }
}

/// Per-message outcomes: acceptance `chi`, success `psi`, departure epoch `depart`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSeq {
    pub chi: Vec<bool>,
    pub psi: Vec<bool>,
    pub depart: Vec<f64>,
    pub warnings: Vec<SimWarning>,
}

impl OutcomeSeq {
    fn new(n: usize) -> Self {
        Self {
            chi: vec![false; n],
            psi: vec![false; n],
            depart: vec![f64::NAN; n],
            warnings: Vec::new(),
        }
    }

    /// Same per-message outcomes, ignoring warnings.
    pub fn same_outcomes(&self, other: &Self) -> bool {
        self.chi == other.chi
            && self.psi == other.psi
            && self
                .depart
                .iter()
                .zip(&other.depart)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    fn accept(&mut self, i: usize) {
        self.chi[i] = true;
    }

    fn finish(&mut self, i: usize, at: f64) {
        self.psi[i] = true;
        self.depart[i] = at;
    }

    fn drop_at(&mut self, i: usize, at: f64) {
        self.psi[i] = false;
        self.depart[i] = at;
    }
}

/// Runs `policy` over `w`. Messages still in the system when the trace ends
/// are served to completion.
pub fn simulate(policy: PolicyKind, w: &Workload) -> OutcomeSeq {
    let (t, s) = (&w.arrivals, &w.services);
    match policy {
        PolicyKind::Pushout => pushout(t, s),
        PolicyKind::Blocking => blocking(t, s),
        PolicyKind::BlockThenPush { ell } => mixed(t, s, |busy_arrivals| busy_arrivals > ell),
        PolicyKind::PushThenBlock { ell } => mixed(t, s, |busy_arrivals| busy_arrivals <= ell),
        PolicyKind::PushoutTwo => pushout_two(t, s),
        PolicyKind::Fifo => fifo(w),
        PolicyKind::PreemptiveLifo => preemptive_lifo(t, s),
    }
}

fn pushout(t: &[f64], s: &[f64]) -> OutcomeSeq {
    let n = t.len();
    let mut o = OutcomeSeq::new(n);
    for i in 0..n {
        o.accept(i);
        let done = t[i] + s[i];
        match t.get(i + 1) {
            Some(&next) if done > next => o.drop_at(i, next),
            _ => o.finish(i, done),
        }
    }
    o
}

fn blocking(t: &[f64], s: &[f64]) -> OutcomeSeq {
    let mut o = OutcomeSeq::new(t.len());
    let mut free_at = f64::NEG_INFINITY;
    for i in 0..t.len() {
        if t[i] >= free_at {
            o.accept(i);
            free_at = t[i] + s[i];
            o.finish(i, free_at);
        } else {
            o.drop_at(i, t[i]);
        }
    }
    o
}

/// Bufferless server where the `k`-th arrival of a busy period that finds
/// the server busy pushes out iff `push(k)`, and is blocked otherwise.
fn mixed<F: Fn(u32) -> bool>(t: &[f64], s: &[f64], push: F) -> OutcomeSeq {
    let mut o = OutcomeSeq::new(t.len());
    let mut current: Option<(usize, f64)> = None;
    let mut busy_arrivals = 0u32;
    for i in 0..t.len() {
        if let Some((j, done)) = current {
            if done <= t[i] {
                o.finish(j, done);
                current = None;
            }
        }
        match current {
            None => {
                busy_arrivals = 0;
                o.accept(i);
                current = Some((i, t[i] + s[i]));
            }
            Some((j, _)) => {
                busy_arrivals = busy_arrivals.saturating_add(1);
                if push(busy_arrivals) {
                    o.drop_at(j, t[i]);
                    o.accept(i);
                    current = Some((i, t[i] + s[i]));
                } else {
                    o.drop_at(i, t[i]);
                }
            }
        }
    }
    if let Some((j, done)) = current {
        o.finish(j, done);
    }
    o
}

fn pushout_two(t: &[f64], s: &[f64]) -> OutcomeSeq {
    let mut o = OutcomeSeq::new(t.len());
    let mut serving: Option<(usize, f64)> = None;
    let mut waiting: Option<usize> = None;

    // Completes everything that finishes by `until`, promoting the waiting
    // message into service.
    let advance = |o: &mut OutcomeSeq,
                   serving: &mut Option<(usize, f64)>,
                   waiting: &mut Option<usize>,
                   until: f64| {
        while let Some((j, done)) = *serving {
            if done > until {
                break;
            }
            o.finish(j, done);
            *serving = waiting.take().map(|w| (w, done + s[w]));
        }
    };

    for i in 0..t.len() {
        advance(&mut o, &mut serving, &mut waiting, t[i]);
        o.accept(i);
        if serving.is_none() {
            serving = Some((i, t[i] + s[i]));
        } else {
            if let Some(w) = waiting.replace(i) {
                o.drop_at(w, t[i]);
            }
        }
    }
    advance(&mut o, &mut serving, &mut waiting, f64::INFINITY);
    o
}

fn fifo(w: &Workload) -> OutcomeSeq {
    let (t, s) = (&w.arrivals, &w.services);
    let mut o = OutcomeSeq::new(t.len());
    let mut last = f64::NEG_INFINITY;
    for i in 0..t.len() {
        o.accept(i);
        last = last.max(t[i]) + s[i];
        o.finish(i, last);
    }
    let (mean_interarrival, mean_service) = match &w.specs {
        Some((tau, sigma)) => (tau.mean(), sigma.mean()),
        None if !t.is_empty() => (
            t[t.len() - 1] / t.len() as f64,
            s.iter().sum::<f64>() / s.len() as f64,
        ),
        None => return o,
    };
    if mean_service >= mean_interarrival {
        o.warnings.push(SimWarning::Instability {
            mean_service,
            mean_interarrival,
        });
    }
    o
}

fn preemptive_lifo(t: &[f64], s: &[f64]) -> OutcomeSeq {
    let mut o = OutcomeSeq::new(t.len());
    // (message, remaining work); the top of the stack is in service.
    let mut stack: Vec<(usize, f64)> = Vec::new();
    let mut now = f64::NEG_INFINITY;

    let run_until =
        |o: &mut OutcomeSeq, stack: &mut Vec<(usize, f64)>, now: &mut f64, until: f64| {
            while let Some(&mut (j, ref mut rem)) = stack.last_mut() {
                let done = *now + *rem;
                if done <= until {
                    *now = done;
                    o.finish(j, done);
                    stack.pop();
                } else {
                    *rem -= until - *now;
                    break;
                }
            }
            *now = until;
        };

    for i in 0..t.len() {
        run_until(&mut o, &mut stack, &mut now, t[i]);
        o.accept(i);
        stack.push((i, s[i]));
    }
    run_until(&mut o, &mut stack, &mut now, f64::INFINITY);
    o
}
