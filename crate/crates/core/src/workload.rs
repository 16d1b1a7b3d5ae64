//! Finite i.i.d. realizations of arrival epochs and service times.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::dist::{DistError, DistSpec};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("invalid workload: {0}")]
    Invalid(String),
}

/// Arrival epochs `T_1 < T_2 < ...` and service times `σ_1, σ_2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub arrivals: Vec<f64>,
    pub services: Vec<f64>,
    pub seed: u64,
    /// Interarrival and service laws, when the trace was generated.
    pub specs: Option<(DistSpec, DistSpec)>,
}

const ARRIVAL_STREAM: u64 = 0;
const SERVICE_STREAM: u64 = 1;

/// Draws `n` messages. Arrivals and services come from disjoint streams of
/// one ChaCha20 generator, so a longer trace extends a shorter one with the
/// same seed.
pub fn generate(
    tau: &DistSpec,
    sigma: &DistSpec,
    n: usize,
    seed: u64,
) -> Result<Workload, WorkloadError> {
    tau.validate()?;
    sigma.validate()?;
    if n == 0 {
        return Err(WorkloadError::Invalid("n must be >= 1".into()));
    }
    let mut arr_rng = ChaCha20Rng::seed_from_u64(seed);
    arr_rng.set_stream(ARRIVAL_STREAM);
    let mut svc_rng = ChaCha20Rng::seed_from_u64(seed);
    svc_rng.set_stream(SERVICE_STREAM);

    let mut arrivals = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        t += tau.sample(&mut arr_rng);
        arrivals.push(t);
    }
    let services = (0..n).map(|_| sigma.sample(&mut svc_rng)).collect();
    Ok(Workload {
        arrivals,
        services,
        seed,
        specs: Some((tau.clone(), sigma.clone())),
    })
}

impl Workload {
    /// Builds a workload from explicit times, checking the invariants.
    pub fn from_times(arrivals: Vec<f64>, services: Vec<f64>) -> Result<Self, WorkloadError> {
        let w = Self {
            arrivals,
            services,
            seed: 0,
            specs: None,
        };
        w.check().map_err(WorkloadError::Invalid)?;
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    fn check(&self) -> Result<(), String> {
        if self.arrivals.len() != self.services.len() {
            return Err(format!(
                "{} arrivals but {} services",
                self.arrivals.len(),
                self.services.len()
            ));
        }
        for (i, (&t, &s)) in self.arrivals.iter().zip(&self.services).enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(format!("arrival {i} is {t}"));
            }
            if i > 0 && t <= self.arrivals[i - 1] {
                return Err(format!("arrival {i} does not increase"));
            }
            if !s.is_finite() || s <= 0.0 {
                return Err(format!("service {i} is {s}"));
            }
        }
        Ok(())
    }

    /// Writes the trace as CSV preceded by a `#` metadata line.
    pub fn save(&self, path: &Path) -> Result<(), WorkloadError> {
        let mut out = Vec::new();
        write!(out, "# seed={}", self.seed)?;
        if let Some((tau, sigma)) = &self.specs {
            let enc = |d: &DistSpec| serde_json::to_string(d).expect("spec serializes");
            write!(out, ";tau={};sigma={}", enc(tau), enc(sigma))?;
        }
        writeln!(out)?;
        {
            let mut wtr = csv::Writer::from_writer(&mut out);
            wtr.write_record(["index", "arrival", "service"])
                .map_err(csv_io)?;
            for (i, (t, s)) in self.arrivals.iter().zip(&self.services).enumerate() {
                wtr.write_record([i.to_string(), format!("{t:.16e}"), format!("{s:.16e}")])
                    .map_err(csv_io)?;
            }
            wtr.flush()?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a trace written by [`Workload::save`].
    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = fs::read_to_string(path)?;
        let (seed, specs) = match text.lines().next() {
            Some(first) if first.starts_with('#') => parse_meta(first)?,
            _ => (0, None),
        };

        #[derive(Deserialize)]
        struct Row {
            index: usize,
            arrival: f64,
            service: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| fmt_err(1, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["index", "arrival", "service"] {
            return Err(WorkloadError::Format {
                line: 2,
                msg: format!("expected header index,arrival,service, got {headers:?}"),
            });
        }
        let mut arrivals = Vec::new();
        let mut services = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| fmt_err(0, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let row: Row = rec
                .deserialize(Some(&headers))
                .map_err(|e| fmt_err(line, e))?;
            if row.index != k {
                return Err(WorkloadError::Format {
                    line,
                    msg: format!("index {} out of sequence", row.index),
                });
            }
            if row.service <= 0.0 || !row.service.is_finite() {
                return Err(WorkloadError::Format {
                    line,
                    msg: format!("service {} is not positive", row.service),
                });
            }
            if !row.arrival.is_finite() || row.arrival < 0.0 {
                return Err(WorkloadError::Format {
                    line,
                    msg: format!("arrival {} is negative", row.arrival),
                });
            }
            if arrivals.last().is_some_and(|&p| row.arrival <= p) {
                return Err(WorkloadError::Format {
                    line,
                    msg: "arrivals are not strictly increasing".into(),
                });
            }
            arrivals.push(row.arrival);
            services.push(row.service);
        }
        Ok(Self {
            arrivals,
            services,
            seed,
            specs,
        })
    }
}

type Meta = (u64, Option<(DistSpec, DistSpec)>);

fn parse_meta(line: &str) -> Result<Meta, WorkloadError> {
    let bad = |msg: String| WorkloadError::Format { line: 1, msg };
    let mut seed = 0;
    let mut tau = None;
    let mut sigma = None;
    for field in line.trim_start_matches('#').trim().split(';') {
        let Some((key, val)) = field.split_once('=') else {
            continue;
        };
        match key.trim() {
            "seed" => seed = val.trim().parse().map_err(|e| bad(format!("seed: {e}")))?,
            "tau" => tau = Some(serde_json::from_str(val).map_err(|e| bad(format!("tau: {e}")))?),
            "sigma" => {
                sigma = Some(serde_json::from_str(val).map_err(|e| bad(format!("sigma: {e}")))?)
            }
            _ => {}
        }
    }
    Ok((seed, tau.zip(sigma)))
}

fn fmt_err(line: usize, e: csv::Error) -> WorkloadError {
    WorkloadError::Format {
        line,
        msg: e.to_string(),
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}
