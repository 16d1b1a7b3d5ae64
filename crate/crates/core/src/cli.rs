//! Batch experiments: simulation runs, analytic tables, figure data and the
//! invariant suite behind the `aoikit` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytic::{
    self, evaluate, pushout, AnalyticError, Measure, ModelSpec, Policy, Quantity, Route,
    SolverConfig,
};
use crate::aoi::{self, AoiError, PathStats};
use crate::dist::DistSpec;
use crate::policies::{simulate, PolicyKind};
use crate::workload::{generate, Workload, WorkloadError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Aoi(#[from] AoiError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Grid-solver settings as they appear in a config file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub h: Option<f64>,
    pub t_max: Option<f64>,
}

impl SolverSection {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            h: self.h,
            t_max: self.t_max,
            ..SolverConfig::default()
        }
    }
}

/// One experiment. Unset grids are derived from the laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tau: DistSpec,
    pub sigma: DistSpec,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_n")]
    pub n_messages: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub u_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub x_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub outputs: Vec<PathBuf>,
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::Pushout, PolicyKind::Blocking]
}

fn default_n() -> usize {
    100_000
}

fn one() -> usize {
    1
}

/// Smallest trace length accepted when simulations are compared with
/// analytic values.
pub const MIN_COMPARISON_MESSAGES: usize = 1000;

impl ExperimentConfig {
    pub fn mm(lambda: f64, mu: f64) -> Self {
        Self {
            tau: DistSpec::exp(lambda),
            sigma: DistSpec::exp(mu),
            policies: default_policies(),
            n_messages: default_n(),
            seed: 0,
            replications: 1,
            u_grid: None,
            x_grid: None,
            solver: SolverSection::default(),
            outputs: Vec::new(),
        }
    }

    /// Parses TOML; errors carry the line and column of the offending key.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        cfg.validate().map_err(|msg| CliError::Config {
            path: origin.to_string(),
            msg,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.tau
            .validate()
            .map_err(|e| format!("field `tau`: {e}"))?;
        self.sigma
            .validate()
            .map_err(|e| format!("field `sigma`: {e}"))?;
        if self.policies.is_empty() {
            return Err("field `policies`: must not be empty".into());
        }
        if self.n_messages == 0 {
            return Err("field `n_messages`: must be >= 1".into());
        }
        if self.replications == 0 {
            return Err("field `replications`: must be >= 1".into());
        }
        for (name, grid) in [("u_grid", &self.u_grid), ("x_grid", &self.x_grid)] {
            if let Some(g) = grid {
                if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(format!("field `{name}`: entries must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn u_grid(&self) -> Vec<f64> {
        self.u_grid.clone().unwrap_or_else(|| {
            let es = self.sigma.mean();
            [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|k| k / es).collect()
        })
    }

    /// Default: exponential quantiles at levels `i/100` around the scale
    /// `E τ + E σ`.
    pub fn x_grid(&self) -> Vec<f64> {
        self.x_grid.clone().unwrap_or_else(|| {
            let scale = self.tau.mean() + self.sigma.mean();
            (1..100)
                .map(|i| -scale * (1.0 - i as f64 / 100.0).ln())
                .collect()
        })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hash of any serializable settings: JSON with sorted keys, SHA-256,
/// first 16 hex digits.
pub fn config_hash<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("settings serialize");
    let canonical = serde_json::to_string(&value).expect("json value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
}

/// Statistics of one policy on one replication, or pooled over all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: PolicyKind,
    /// `None` for the pooled record.
    pub replication: Option<usize>,
    pub measure: Measure,
    pub stats: PathStats,
    pub warnings: Vec<String>,
}

fn run_policy(
    cfg: &ExperimentConfig,
    w: &Workload,
    policy: PolicyKind,
    rep: usize,
    u_grid: &[f64],
    x_grid: &[f64],
) -> Result<[RunRecord; 2], CliError> {
    let o = simulate(policy, w);
    let warnings: Vec<String> = o.warnings.iter().map(|w| w.to_string()).collect();
    let win = aoi::default_window(w, &o)?;
    let f = aoi::Freshness::from_outcomes(w, &o);
    let a = aoi::alpha_from(&f, win)?;
    let b = aoi::beta_from(&w.arrivals, &f, win)?;
    let _ = cfg;
    let rec = |measure, stats| RunRecord {
        policy,
        replication: Some(rep),
        measure,
        stats,
        warnings: warnings.clone(),
    };
    Ok([
        rec(Measure::Aoi, a.stats(u_grid, x_grid)),
        rec(Measure::Naoi, b.stats(u_grid, x_grid)),
    ])
}

/// Workload of replication `rep`: seed `seed + rep`.
pub fn replication_workload(cfg: &ExperimentConfig, rep: usize) -> Result<Workload, CliError> {
    Ok(generate(
        &cfg.tau,
        &cfg.sigma,
        cfg.n_messages,
        cfg.seed.wrapping_add(rep as u64),
    )?)
}

/// Runs every policy on every replication; replications run in parallel
/// and come back in order. With `trace` the given workload is the only
/// replication.
pub fn simulate_runs(
    cfg: &ExperimentConfig,
    trace: Option<&Workload>,
) -> Result<Vec<RunRecord>, CliError> {
    let (u_grid, x_grid) = (cfg.u_grid(), cfg.x_grid());
    let reps = if trace.is_some() { 1 } else { cfg.replications };
    let per_rep: Vec<Vec<RunRecord>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let owned;
            let w = match trace {
                Some(w) => w,
                None => {
                    owned = replication_workload(cfg, rep)?;
                    &owned
                }
            };
            let mut out = Vec::new();
            for &p in &cfg.policies {
                out.extend(run_policy(cfg, w, p, rep, &u_grid, &x_grid)?);
            }
            Ok(out)
        })
        .collect::<Result<_, CliError>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Pools replications of one policy and measure: time averages are
/// weighted by window length; the standard error is the spread of the
/// replication means when there are several, else the batch-means error.
pub fn pool(records: &[RunRecord]) -> Vec<RunRecord> {
    let mut keys: Vec<(PolicyKind, Measure)> = Vec::new();
    for r in records.iter().filter(|r| r.replication.is_some()) {
        if !keys.contains(&(r.policy, r.measure)) {
            keys.push((r.policy, r.measure));
        }
    }
    keys.into_iter()
        .map(|(policy, measure)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.replication.is_some() && r.policy == policy && r.measure == measure)
                .collect();
            let len = |r: &RunRecord| r.stats.window.1 - r.stats.window.0;
            let total: f64 = group.iter().map(|r| len(r)).sum();
            let wavg = |get: &dyn Fn(&PathStats) -> f64| {
                group.iter().map(|r| len(r) * get(&r.stats)).sum::<f64>() / total
            };
            let time_mean = wavg(&|s| s.time_mean);
            let k = group.len();
            let se_mean = if k >= 2 {
                let m = group.iter().map(|r| r.stats.time_mean).sum::<f64>() / k as f64;
                let var = group
                    .iter()
                    .map(|r| (r.stats.time_mean - m).powi(2))
                    .sum::<f64>()
                    / (k - 1) as f64;
                (var / k as f64).sqrt()
            } else {
                group[0].stats.se_mean
            };
            let first = &group[0].stats;
            let lt = (0..first.lt.len())
                .map(|i| (first.lt[i].0, wavg(&|s| s.lt[i].1)))
                .collect();
            let cdf = (0..first.cdf.len())
                .map(|i| (first.cdf[i].0, wavg(&|s| s.cdf[i].1)))
                .collect();
            let window = (
                group
                    .iter()
                    .map(|r| r.stats.window.0)
                    .fold(f64::INFINITY, f64::min),
                group
                    .iter()
                    .map(|r| r.stats.window.1)
                    .fold(f64::NEG_INFINITY, f64::max),
            );
            let mut warnings: Vec<String> = group.iter().flat_map(|r| r.warnings.clone()).collect();
            warnings.dedup();
            RunRecord {
                policy,
                replication: None,
                measure,
                stats: PathStats {
                    time_mean,
                    se_mean,
                    atom_zero: wavg(&|s| s.atom_zero),
                    lt,
                    cdf,
                    window,
                },
                warnings,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish_csv(hash: &str, wtr: csv::Writer<Vec<u8>>) -> String {
    let body = String::from_utf8(wtr.into_inner().expect("in-memory writer")).expect("utf-8");
    format!("# config_hash={hash}\n{body}")
}

/// Long-format CSV: one row per statistic.
pub fn render_runs_csv(hash: &str, records: &[RunRecord]) -> String {
    let mut wtr = csv_writer();
    wtr.write_record([
        "policy",
        "replication",
        "measure",
        "stat",
        "arg",
        "value",
        "flags",
    ])
    .expect("in-memory write");
    for r in records {
        let rep = r
            .replication
            .map_or("pooled".to_string(), |k| k.to_string());
        let flags = r.warnings.join("; ");
        let mut row = |stat: &str, arg: String, value: f64| {
            let rec = [
                r.policy.to_string(),
                rep.clone(),
                r.measure.to_string(),
                stat.to_string(),
                arg,
                value.to_string(),
                flags.clone(),
            ];
            wtr.write_record(&rec).expect("in-memory write");
        };
        let s = &r.stats;
        row("time_mean", String::new(), s.time_mean);
        row("se_mean", String::new(), s.se_mean);
        if r.measure == Measure::Naoi {
            row("atom_zero", String::new(), s.atom_zero);
        }
        row("window_start", String::new(), s.window.0);
        row("window_end", String::new(), s.window.1);
        for (u, v) in &s.lt {
            row("lt", u.to_string(), *v);
        }
        for (x, v) in &s.cdf {
            row("cdf", x.to_string(), *v);
        }
    }
    finish_csv(hash, wtr)
}

pub fn render_runs_json(hash: &str, records: &[RunRecord]) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        config_hash: &'a str,
        records: &'a [RunRecord],
    }
    let mut s = serde_json::to_string_pretty(&Doc {
        config_hash: hash,
        records,
    })
    .expect("records serialize");
    s.push('\n');
    s
}

/// A model row of the means table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum TableModel {
    /// Exponential interarrivals and services.
    Mm,
    /// Exponential interarrivals, deterministic services.
    Mgi,
    /// Deterministic interarrivals, exponential services.
    Gim,
    /// Uniform interarrivals on `[0.5, 1.5]/λ`, uniform services on `[0.2, 0.6]/μ`.
    Gigi,
}

impl TableModel {
    pub fn spec(self, lambda: f64, mu: f64) -> Result<ModelSpec, AnalyticError> {
        let (tau, sigma) = match self {
            Self::Mm => (DistSpec::exp(lambda), DistSpec::exp(mu)),
            Self::Mgi => (DistSpec::exp(lambda), DistSpec::det(1.0 / mu)),
            Self::Gim => (DistSpec::det(1.0 / lambda), DistSpec::exp(mu)),
            Self::Gigi => (
                DistSpec::uniform(0.5 / lambda, 1.5 / lambda),
                DistSpec::uniform(0.2 / mu, 0.6 / mu),
            ),
        };
        ModelSpec::new(tau, sigma)
    }

    fn label(self) -> &'static str {
        match self {
            Self::Mm => "M/M",
            Self::Mgi => "M/GI",
            Self::Gim => "GI/M",
            Self::Gigi => "GI/GI",
        }
    }
}

/// Simulation settings for comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSettings {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl SimSettings {
    fn check(&self) -> Result<(), CliError> {
        if self.n < MIN_COMPARISON_MESSAGES {
            return Err(CliError::Arg(format!(
                "comparison runs need at least {MIN_COMPARISON_MESSAGES} messages, got {}",
                self.n
            )));
        }
        if self.reps == 0 {
            return Err(CliError::Arg("replications must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub model: String,
    pub spec: String,
    pub policy: Policy,
    pub measure: Measure,
    pub analytic: f64,
    pub method: Route,
    pub simulated: Option<f64>,
    pub se: Option<f64>,
    pub rel_error: Option<f64>,
}

fn sim_policy(p: Policy) -> PolicyKind {
    match p {
        Policy::Pushout => PolicyKind::Pushout,
        Policy::Blocking => PolicyKind::Blocking,
    }
}

/// Pooled simulated time-means of AoI and NAoI for `model`.
pub fn simulated_means(
    model: &ModelSpec,
    policies: &[PolicyKind],
    sim: SimSettings,
) -> Result<Vec<RunRecord>, CliError> {
    let cfg = ExperimentConfig {
        policies: policies.to_vec(),
        n_messages: sim.n,
        seed: sim.seed,
        replications: sim.reps,
        u_grid: Some(Vec::new()),
        x_grid: Some(Vec::new()),
        ..ExperimentConfig::mm(1.0, 1.0)
    };
    let cfg = ExperimentConfig {
        tau: model.tau.clone(),
        sigma: model.sigma.clone(),
        ..cfg
    };
    Ok(pool(&simulate_runs(&cfg, None)?))
}

/// The four mean cells of each model row, analytic and optionally simulated.
pub fn table1(
    lambda: f64,
    mu: f64,
    models: &[TableModel],
    sim: Option<SimSettings>,
    solver: &SolverConfig,
) -> Result<Vec<TableCell>, CliError> {
    if let Some(s) = &sim {
        s.check()?;
    }
    let mut cells = Vec::new();
    for &tm in models {
        let m = tm.spec(lambda, mu)?;
        let pooled = match sim {
            Some(s) => Some(simulated_means(
                &m,
                &[PolicyKind::Pushout, PolicyKind::Blocking],
                s,
            )?),
            None => None,
        };
        for p in [Policy::Pushout, Policy::Blocking] {
            for meas in [Measure::Aoi, Measure::Naoi] {
                let ev = evaluate(&m, p, Quantity::Mean(meas), Route::Auto, solver)?;
                let rec = pooled.as_ref().and_then(|v| {
                    v.iter()
                        .find(|r| r.policy == sim_policy(p) && r.measure == meas)
                        .cloned()
                });
                cells.push(TableCell {
                    model: tm.label().to_string(),
                    spec: m.to_string(),
                    policy: p,
                    measure: meas,
                    analytic: ev.value,
                    method: ev.method,
                    simulated: rec.as_ref().map(|r| r.stats.time_mean),
                    se: rec.as_ref().map(|r| r.stats.se_mean),
                    rel_error: rec.map(|r| (r.stats.time_mean - ev.value).abs() / ev.value),
                });
            }
        }
    }
    Ok(cells)
}

pub fn render_table_csv(hash: &str, cells: &[TableCell]) -> String {
    let mut wtr = csv_writer();
    wtr.write_record([
        "model",
        "spec",
        "policy",
        "measure",
        "analytic",
        "method",
        "simulated",
        "se",
        "rel_error",
    ])
    .expect("in-memory write");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for c in cells {
        wtr.write_record([
            c.model.clone(),
            c.spec.clone(),
            c.policy.to_string(),
            c.measure.to_string(),
            c.analytic.to_string(),
            c.method.to_string(),
            opt(c.simulated),
            opt(c.se),
            opt(c.rel_error),
        ])
        .expect("in-memory write");
    }
    finish_csv(hash, wtr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FigureName {
    /// Mean NAoI, M/M.
    Fig3a,
    /// Mean NAoI, M/D.
    Fig3b,
    /// Mean NAoI, M/GI with the bimodal service law.
    Fig3c,
    /// Mean NAoI, D/M, with the simulated two-slot pushout curve.
    Dm1,
    /// Mean AoI, M/M, with FIFO and the simulated two-slot pushout curve.
    Fifo,
}

/// Columns and rows of a figure's curves. Missing points are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureData {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureData {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn lambda_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn p2_mean(model: &ModelSpec, measure: Measure, sim: SimSettings) -> Result<f64, CliError> {
    let recs = simulated_means(model, &[PolicyKind::PushoutTwo], sim)?;
    Ok(recs
        .iter()
        .find(|r| r.measure == measure)
        .expect("both measures recorded")
        .stats
        .time_mean)
}

/// Curves of one figure over its rate grid, with `μ = 1`.
pub fn figure(name: FigureName, sim: SimSettings) -> Result<FigureData, CliError> {
    let analytic_pair = |m: &ModelSpec, meas| -> Result<[f64; 2], CliError> {
        Ok([
            analytic::mean(m, Policy::Pushout, meas)?,
            analytic::mean(m, Policy::Blocking, meas)?,
        ])
    };
    let cols = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let data = match name {
        FigureName::Fig3a | FigureName::Fig3b | FigureName::Fig3c => {
            let sigma = match name {
                FigureName::Fig3a => DistSpec::exp(1.0),
                FigureName::Fig3b => DistSpec::det(1.0),
                _ => analytic::bimodal_service(),
            };
            let rows = lambda_grid(0.25, 20.0, 0.25)
                .into_iter()
                .map(|l| {
                    let m = ModelSpec::new(DistSpec::exp(l), sigma.clone())?;
                    let [p, b] = analytic_pair(&m, Measure::Naoi)?;
                    Ok(vec![l, p, b])
                })
                .collect::<Result<_, CliError>>()?;
            FigureData {
                columns: cols(&["lambda", "pushout", "blocking"]),
                rows,
            }
        }
        FigureName::Dm1 | FigureName::Fifo => {
            sim.check()?;
            let (grid, meas) = match name {
                FigureName::Dm1 => (lambda_grid(0.2, 4.0, 0.2), Measure::Naoi),
                _ => (lambda_grid(0.05, 0.95, 0.05), Measure::Aoi),
            };
            let rows = grid
                .par_iter()
                .map(|&l| {
                    let tau = match name {
                        FigureName::Dm1 => DistSpec::det(1.0 / l),
                        _ => DistSpec::exp(l),
                    };
                    let m = ModelSpec::new(tau, DistSpec::exp(1.0))?;
                    let [p, b] = analytic_pair(&m, meas)?;
                    let p2 = p2_mean(&m, meas, sim)?;
                    let mut row = vec![l, p, b, p2];
                    if name == FigureName::Fifo {
                        row.push(analytic::fifo_mean_aoi_mm(l, 1.0).unwrap_or(f64::NAN));
                    }
                    Ok(row)
                })
                .collect::<Result<_, CliError>>()?;
            let mut columns = cols(&["lambda", "pushout", "blocking", "p2"]);
            if name == FigureName::Fifo {
                columns.push("fifo".into());
            }
            FigureData { columns, rows }
        }
    };
    Ok(data)
}

pub fn render_figure_csv(hash: &str, fig: &FigureData) -> String {
    let mut wtr = csv_writer();
    wtr.write_record(&fig.columns).expect("in-memory write");
    for r in &fig.rows {
        wtr.write_record(r.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    finish_csv(hash, wtr)
}

/// Knobs of the invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Random workloads per structural check.
    pub seeds: usize,
    pub base_seed: u64,
    /// Messages per structural workload.
    pub n_structural: usize,
    /// Messages for statistical comparisons.
    pub n_statistical: usize,
    pub solver: SolverSection,
    /// Harness self-test: compare FIFO with itself instead of with the
    /// two-slot pushout system.
    pub inject_fifo_for_p2: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 20,
            base_seed: 1,
            n_structural: 10_000,
            n_statistical: 100_000,
            solver: SolverSection::default(),
            inject_fifo_for_p2: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{tag} {}: {}", c.name, c.detail);
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(s, "{} checks, {failed} failed", self.checks.len());
        s
    }
}

/// The structural workload families: M/M, D/M and M/D at a rate drawn
/// from the seed, plus an overloaded M/M.
pub fn structural_workloads(seed: u64, n: usize) -> Result<Vec<(String, Workload)>, CliError> {
    let l = 0.3 + (seed % 17) as f64 * 0.15;
    let fams = [
        ("M/M", DistSpec::exp(l), DistSpec::exp(1.0)),
        ("D/M", DistSpec::det(1.0 / l), DistSpec::exp(1.0)),
        ("M/D", DistSpec::exp(l), DistSpec::det(1.0)),
        ("M/M overload", DistSpec::exp(1.5), DistSpec::exp(1.0)),
    ];
    fams.into_iter()
        .map(|(name, t, s)| {
            Ok((
                format!("{name} lambda={l:.2} seed={seed}"),
                generate(&t, &s, n, seed)?,
            ))
        })
        .collect()
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs the invariant suite.
pub fn verify(opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let seeds: Vec<u64> = (0..opts.seeds as u64).map(|k| opts.base_seed + k).collect();

    let structural: Vec<(String, Workload)> = match seeds
        .par_iter()
        .map(|&s| structural_workloads(s, opts.n_structural))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(v) => v.into_iter().flatten().collect(),
        Err(e) => {
            checks.push(check("workloads", false, e.to_string()));
            Vec::new()
        }
    };

    let obs1: Vec<String> = structural
        .par_iter()
        .filter_map(|(name, w)| {
            let r = aoi::check_observation1(w);
            (!r.equal).then(|| format!("{name}: first mismatch at {:?}", r.first_mismatch))
        })
        .collect();
    checks.push(check(
        "observation1 plifo == pushout",
        obs1.is_empty(),
        summary(structural.len(), &obs1),
    ));

    let lower = if opts.inject_fifo_for_p2 {
        PolicyKind::Fifo
    } else {
        PolicyKind::PushoutTwo
    };
    let obs2: Vec<String> = structural
        .par_iter()
        .filter_map(|(name, w)| {
            let r = aoi::check_dominance(w, PolicyKind::Fifo, lower);
            if r.degenerate {
                Some(format!(
                    "{name}: {} vs {} degenerate (identical outcomes)",
                    r.upper, r.lower
                ))
            } else if !r.violations.is_empty() {
                Some(format!(
                    "{name}: {} violations, first at {}",
                    r.violations.len(),
                    r.violations[0].t
                ))
            } else {
                None
            }
        })
        .collect();
    checks.push(check(
        &format!("observation2 fifo >= {lower}"),
        obs2.is_empty(),
        summary(structural.len(), &obs2),
    ));

    let degenerate: Vec<String> = structural
        .par_iter()
        .flat_map_iter(|(name, w)| {
            [
                (PolicyKind::BlockThenPush { ell: 0 }, PolicyKind::Pushout),
                (PolicyKind::PushThenBlock { ell: 0 }, PolicyKind::Blocking),
            ]
            .into_iter()
            .filter(|(a, b)| !simulate(*a, w).same_outcomes(&simulate(*b, w)))
            .map(move |(a, b)| format!("{name}: {a} differs from {b}"))
        })
        .collect();
    checks.push(check(
        "bp:0 == pushout, pb:0 == blocking",
        degenerate.is_empty(),
        summary(structural.len(), &degenerate),
    ));

    let solver = opts.solver.config();
    for tau in [
        DistSpec::exp(1.0),
        DistSpec::det(1.0),
        DistSpec::uniform(0.5, 1.5),
    ] {
        let name = format!("laplace residuals tau={tau}");
        let res: Result<f64, AnalyticError> = [0.5, 1.0, 2.0].iter().try_fold(0.0, |acc, &xi| {
            Ok(analytic::laplace_checks(&tau, 1.0, xi, &solver)?
                .max_rel_residual
                .max(acc))
        });
        checks.push(match res {
            Ok(r) => check(&name, r < 1e-3, format!("max relative residual {r:.2e}")),
            Err(e) => check(&name, false, e.to_string()),
        });
    }

    checks.extend(statistical_checks(opts));
    checks.push(route_check());
    VerifyReport { checks }
}

fn summary(total: usize, failures: &[String]) -> String {
    match failures.first() {
        None => format!("{total} workloads"),
        Some(f) => format!("{} of {total} failed; {f}", failures.len()),
    }
}

fn statistical_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let sim = SimSettings {
        n: opts.n_statistical,
        reps: 1,
        seed: opts.base_seed,
    };
    let mm = ModelSpec::mm(1.0, 1.0).expect("valid");
    let dm = ModelSpec::new(DistSpec::det(1.0), DistSpec::exp(1.0)).expect("valid");
    for (label, m) in [("M/M", &mm), ("D/M", &dm)] {
        let recs = match simulated_means(m, &[PolicyKind::Pushout, PolicyKind::Blocking], sim) {
            Ok(r) => r,
            Err(e) => {
                out.push(check(&format!("atoms {label}"), false, e.to_string()));
                continue;
            }
        };
        for p in [Policy::Pushout, Policy::Blocking] {
            let name = format!("zero atom {label} {p}");
            let sim_atom = recs
                .iter()
                .find(|r| r.policy == sim_policy(p) && r.measure == Measure::Naoi)
                .map(|r| r.stats.atom_zero);
            out.push(match (analytic::atom(m, p), sim_atom) {
                (Ok(a), Some(s)) => check(
                    &name,
                    (a - s).abs() < 0.01,
                    format!("simulated {s:.4}, analytic {a:.4}"),
                ),
                (Err(e), _) => check(&name, false, e.to_string()),
                (_, None) => check(&name, false, "missing record".into()),
            });
        }
    }

    let name = "pushout M/M AoI is Exp(1)+Exp(1)";
    let res = (|| -> Result<f64, CliError> {
        let cfg = ExperimentConfig {
            n_messages: opts.n_statistical,
            seed: opts.base_seed,
            ..ExperimentConfig::mm(1.0, 1.0)
        };
        let w = replication_workload(&cfg, 0)?;
        let o = simulate(PolicyKind::Pushout, &w);
        let path = aoi::extract_alpha(&w, &o, aoi::default_window(&w, &o)?)?;
        Ok(aoi::ks_distance(
            &path,
            |x| pushout::mm_aoi_cdf(1.0, 1.0, x),
            2000,
        ))
    })();
    out.push(match res {
        Ok(d) => check(name, d < 0.01, format!("KS distance {d:.4}")),
        Err(e) => check(name, false, e.to_string()),
    });
    out
}

fn route_check() -> CheckResult {
    let name = "M/M blocking via m-gi, gi-m and gi-gi routes";
    let m = ModelSpec::mm(1.0, 1.0).expect("valid");
    let mut worst: f64 = 0.0;
    for q in [
        Quantity::Mean(Measure::Aoi),
        Quantity::Mean(Measure::Naoi),
        Quantity::LtNaoi(1.0),
        Quantity::Atom,
    ] {
        let base = match evaluate(&m, Policy::Blocking, q, Route::MM, &SolverConfig::default()) {
            Ok(e) => e.value,
            Err(e) => return check(name, false, e.to_string()),
        };
        for r in [Route::MGi, Route::GiM, Route::GiGi] {
            match evaluate(&m, Policy::Blocking, q, r, &SolverConfig::default()) {
                Ok(e) => worst = worst.max(((e.value - base) / base).abs()),
                Err(e) => return check(name, false, e.to_string()),
            }
        }
    }
    check(
        name,
        worst < 1e-3,
        format!("largest relative gap {worst:.2e}"),
    )
}

/// A JSON record of one analytic value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticRecord {
    pub model: ModelSpec,
    pub policy: Policy,
    pub measure: Measure,
    /// `mean`, `atom`, or `lt@u`.
    pub quantity: String,
    pub value: f64,
    pub method: Route,
    pub h: Option<f64>,
    pub t_max: Option<f64>,
    pub residuals: Option<f64>,
}

/// Means, atom and transforms at `u_grid` for both bufferless policies.
pub fn analytic_records(
    model: &ModelSpec,
    route: Route,
    u_grid: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<AnalyticRecord>, CliError> {
    let mut jobs = Vec::new();
    for p in [Policy::Pushout, Policy::Blocking] {
        jobs.push((
            p,
            Measure::Aoi,
            Quantity::Mean(Measure::Aoi),
            "mean".to_string(),
        ));
        jobs.push((
            p,
            Measure::Naoi,
            Quantity::Mean(Measure::Naoi),
            "mean".to_string(),
        ));
        jobs.push((p, Measure::Naoi, Quantity::Atom, "atom".to_string()));
        for &u in u_grid {
            jobs.push((p, Measure::Aoi, Quantity::LtAoi(u), format!("lt@{u}")));
            jobs.push((p, Measure::Naoi, Quantity::LtNaoi(u), format!("lt@{u}")));
        }
    }
    jobs.into_par_iter()
        .map(|(p, meas, q, label)| {
            let ev = evaluate(model, p, q, route, solver)?;
            Ok(AnalyticRecord {
                model: model.clone(),
                policy: p,
                measure: meas,
                quantity: label,
                value: ev.value,
                method: ev.method,
                h: ev.h,
                t_max: ev.t_max,
                residuals: ev.residual,
            })
        })
        .collect()
}

#[derive(Debug, Parser)]
#[command(
    name = "aoikit",
    version,
    about = "AoI and NAoI of bufferless and small-buffer systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate policies and write per-replication and pooled path statistics.
    Simulate(SimulateArgs),
    /// Mean AoI and NAoI table, analytic against simulated.
    Table1(Table1Args),
    /// Curve data behind a figure.
    Figure(FigureArgs),
    /// Run the invariant suite; exits nonzero on any failure.
    Verify(VerifyArgs),
    /// Analytic means, atoms and transforms as JSON records.
    Analytic(AnalyticArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// TOML experiment file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exponential arrival rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Exponential service rate.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Interarrival law as JSON, e.g. '{"kind":"det","value":1}'.
    #[arg(long)]
    pub tau: Option<String>,
    /// Service law as JSON.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Grid step of the renewal solver.
    #[arg(long)]
    pub h: Option<f64>,
    /// Horizon of the renewal solver.
    #[arg(long)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Messages per replication.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated: pushout, blocking, bp:L, pb:L, p2, fifo, plifo.
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<PolicyKind>,
    /// Replay a saved trace instead of generating workloads.
    #[arg(long)]
    pub trace_in: Option<PathBuf>,
    /// Save the workload of replication 0.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values = ["mm", "mgi", "gim", "gigi"])]
    pub models: Vec<TableModel>,
    /// Analytic cells only.
    #[arg(long)]
    pub no_sim: bool,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub name: FigureName,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random workloads per structural check.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Messages per structural workload.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Messages for the statistical checks.
    #[arg(long, default_value_t = 100_000)]
    pub n_stat: usize,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Harness self-test: FIFO stands in for the two-slot system.
    #[arg(long)]
    pub inject_fifo_for_p2: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "auto")]
    pub route: Route,
    /// Transform arguments; defaults to the configured or derived u-grid.
    #[arg(long, value_delimiter = ',')]
    pub u: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_law(s: &str, flag: &str) -> Result<DistSpec, CliError> {
    let d: DistSpec =
        serde_json::from_str(s).map_err(|e| CliError::Arg(format!("--{flag}: {e}")))?;
    d.validate()
        .map_err(|e| CliError::Arg(format!("--{flag}: {e}")))?;
    Ok(d)
}

/// Builds the effective configuration: file first, then flags.
pub fn resolve_config(
    model: &ModelArgs,
    run: Option<&RunArgs>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &model.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::mm(1.0, 1.0),
    };
    if let Some(l) = model.lambda {
        cfg.tau = DistSpec::exp(l);
    }
    if let Some(m) = model.mu {
        cfg.sigma = DistSpec::exp(m);
    }
    if let Some(t) = &model.tau {
        cfg.tau = parse_law(t, "tau")?;
    }
    if let Some(s) = &model.sigma {
        cfg.sigma = parse_law(s, "sigma")?;
    }
    if model.h.is_some() {
        cfg.solver.h = model.h;
    }
    if model.t_max.is_some() {
        cfg.solver.t_max = model.t_max;
    }
    if let Some(r) = run {
        if let Some(s) = r.seed {
            cfg.seed = s;
        }
        if let Some(n) = r.n {
            cfg.n_messages = n;
        }
        if let Some(k) = r.reps {
            cfg.replications = k;
        }
    }
    cfg.validate().map_err(CliError::Arg)?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::write(p, text).map_err(io_err(p))
        }
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
                    path: "<stdout>".into(),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

/// Runs a parsed command; `Ok(false)` means a check failed.
pub fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Table1(a) => cmd_table1(a),
        Command::Figure(a) => cmd_figure(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Analytic(a) => cmd_analytic(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<bool, CliError> {
    let mut cfg = resolve_config(&a.model, Some(&a.run))?;
    if !a.policy.is_empty() {
        cfg.policies = a.policy.clone();
    }
    let trace = match &a.trace_in {
        Some(p) => {
            let w = Workload::load(p)?;
            if let Some((t, s)) = &w.specs {
                cfg.tau = t.clone();
                cfg.sigma = s.clone();
            }
            cfg.n_messages = w.len();
            cfg.replications = 1;
            Some(w)
        }
        None => None,
    };
    if let Some(p) = &a.trace_out {
        let w = match &trace {
            Some(w) => w.clone(),
            None => replication_workload(&cfg, 0)?,
        };
        w.save(p)?;
    }
    let mut records = simulate_runs(&cfg, trace.as_ref())?;
    let pooled = pool(&records);
    for r in &pooled {
        eprintln!(
            "{:>10} {:>4}: mean {:.5} ± {:.5}{}",
            r.policy.to_string(),
            r.measure.to_string(),
            r.stats.time_mean,
            r.stats.se_mean,
            if r.warnings.is_empty() {
                String::new()
            } else {
                format!("  [{}]", r.warnings.join("; "))
            }
        );
    }
    records.extend(pooled);
    let hash = cfg.hash();
    let text = match a.run.format {
        Format::Csv => render_runs_csv(&hash, &records),
        Format::Json => render_runs_json(&hash, &records),
    };
    emit(a.run.out.as_deref(), &text)?;
    for extra in &cfg.outputs {
        emit(Some(extra), &text)?;
    }
    Ok(true)
}

fn cmd_table1(a: Table1Args) -> Result<bool, CliError> {
    let lambda = a.model.lambda.unwrap_or(1.0);
    let mu = a.model.mu.unwrap_or(1.0);
    let sim = (!a.no_sim).then(|| SimSettings {
        n: a.run.n.unwrap_or(100_000),
        reps: a.run.reps.unwrap_or(10),
        seed: a.run.seed.unwrap_or(0),
    });
    let solver = SolverConfig {
        h: a.model.h,
        t_max: a.model.t_max,
        ..SolverConfig::default()
    };
    let cells = table1(lambda, mu, &a.models, sim, &solver)?;
    #[derive(Serialize)]
    struct Settings<'a> {
        command: &'static str,
        lambda: f64,
        mu: f64,
        models: &'a [TableModel],
        sim: Option<SimSettings>,
        h: Option<f64>,
        t_max: Option<f64>,
    }
    let hash = config_hash(&Settings {
        command: "table1",
        lambda,
        mu,
        models: &a.models,
        sim,
        h: a.model.h,
        t_max: a.model.t_max,
    });
    let text = match a.run.format {
        Format::Csv => render_table_csv(&hash, &cells),
        Format::Json => serde_json::to_string_pretty(&cells).expect("cells serialize") + "\n",
    };
    emit(a.run.out.as_deref(), &text)?;
    Ok(true)
}

fn cmd_figure(a: FigureArgs) -> Result<bool, CliError> {
    let sim = SimSettings {
        n: a.run.n.unwrap_or(100_000),
        reps: a.run.reps.unwrap_or(1),
        seed: a.run.seed.unwrap_or(0),
    };
    let fig = figure(a.name, sim)?;
    #[derive(Serialize)]
    struct Settings {
        command: &'static str,
        name: FigureName,
        sim: SimSettings,
    }
    let hash = config_hash(&Settings {
        command: "figure",
        name: a.name,
        sim,
    });
    let text = match a.run.format {
        Format::Csv => render_figure_csv(&hash, &fig),
        Format::Json => serde_json::to_string_pretty(&fig).expect("figure serializes") + "\n",
    };
    emit(a.run.out.as_deref(), &text)?;
    Ok(true)
}

fn cmd_verify(a: VerifyArgs) -> Result<bool, CliError> {
    let opts = VerifyOptions {
        seeds: a.seeds,
        base_seed: a.seed,
        n_structural: a.n,
        n_statistical: a.n_stat,
        solver: SolverSection {
            h: a.h,
            t_max: a.t_max,
        },
        inject_fifo_for_p2: a.inject_fifo_for_p2,
    };
    let report = verify(&opts);
    let text = format!("# config_hash={}\n{}", config_hash(&opts), report.render());
    emit(a.out.as_deref(), &text)?;
    Ok(report.passed())
}

fn cmd_analytic(a: AnalyticArgs) -> Result<bool, CliError> {
    let cfg = resolve_config(&a.model, None)?;
    let model = ModelSpec::new(cfg.tau.clone(), cfg.sigma.clone())?;
    let u = if a.u.is_empty() {
        cfg.u_grid()
    } else {
        a.u.clone()
    };
    let recs = analytic_records(&model, a.route, &u, &cfg.solver.config())?;
    let mut text = String::new();
    for r in &recs {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)?;
    Ok(true)
}
