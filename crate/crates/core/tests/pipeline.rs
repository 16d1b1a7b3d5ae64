//! Simulation against analytic values across laws and policies.

use aoikit::analytic::{self, Measure, ModelSpec, Policy};
use aoikit::cli::{pool, simulate_runs, ExperimentConfig, RunRecord};
use aoikit::dist::DistSpec;
use aoikit::policies::PolicyKind;

fn pooled(tau: DistSpec, sigma: DistSpec, policies: Vec<PolicyKind>, seed: u64) -> Vec<RunRecord> {
    let cfg = ExperimentConfig {
        tau,
        sigma,
        policies,
        n_messages: 100_000,
        seed,
        replications: 2,
        u_grid: Some(vec![1.0]),
        x_grid: Some(Vec::new()),
        ..ExperimentConfig::mm(1.0, 1.0)
    };
    pool(&simulate_runs(&cfg, None).unwrap())
}

fn sim_mean(recs: &[RunRecord], p: PolicyKind, m: Measure) -> f64 {
    recs.iter()
        .find(|r| r.policy == p && r.measure == m)
        .unwrap()
        .stats
        .time_mean
}

#[test]
fn means_match_for_mixed_laws() {
    let cases = [
        (DistSpec::erlang(2, 2.0), DistSpec::uniform(0.1, 0.9)),
        (DistSpec::exp(3.0), analytic::bimodal_service()),
        (DistSpec::uniform(0.2, 1.0), DistSpec::det(0.7)),
    ];
    for (i, (tau, sigma)) in cases.into_iter().enumerate() {
        let m = ModelSpec::new(tau.clone(), sigma.clone()).unwrap();
        let recs = pooled(
            tau,
            sigma,
            vec![PolicyKind::Pushout, PolicyKind::Blocking],
            40 + i as u64,
        );
        for (p, k) in [
            (Policy::Pushout, PolicyKind::Pushout),
            (Policy::Blocking, PolicyKind::Blocking),
        ] {
            for meas in [Measure::Aoi, Measure::Naoi] {
                let a = analytic::mean(&m, p, meas).unwrap();
                let s = sim_mean(&recs, k, meas);
                assert!(
                    (s - a).abs() / a < 0.03,
                    "{m} {p} {meas}: sim {s} analytic {a}"
                );
            }
        }
    }
}

#[test]
fn atoms_and_transforms_for_deterministic_arrivals() {
    let (tau, sigma) = (DistSpec::det(1.0), DistSpec::erlang(3, 4.0));
    let m = ModelSpec::new(tau.clone(), sigma.clone()).unwrap();
    let recs = pooled(
        tau,
        sigma,
        vec![PolicyKind::Pushout, PolicyKind::Blocking],
        77,
    );
    for (p, k) in [
        (Policy::Pushout, PolicyKind::Pushout),
        (Policy::Blocking, PolicyKind::Blocking),
    ] {
        let naoi = recs
            .iter()
            .find(|r| r.policy == k && r.measure == Measure::Naoi)
            .unwrap();
        let aoi = recs
            .iter()
            .find(|r| r.policy == k && r.measure == Measure::Aoi)
            .unwrap();
        let atom = analytic::atom(&m, p).unwrap();
        assert!(
            (naoi.stats.atom_zero - atom).abs() < 0.01,
            "{p}: {} vs {atom}",
            naoi.stats.atom_zero
        );
        let lt_b = analytic::lt_naoi(&m, p, 1.0).unwrap();
        let lt_a = analytic::lt_aoi(&m, p, 1.0).unwrap();
        assert!((naoi.stats.lt[0].1 - lt_b).abs() < 0.01);
        assert!((aoi.stats.lt[0].1 - lt_a).abs() < 0.01);
    }
}

#[test]
fn mixed_policies_sit_between_extremes_at_mm() {
    let recs = pooled(
        DistSpec::exp(2.0),
        DistSpec::exp(1.0),
        vec![
            PolicyKind::Pushout,
            PolicyKind::Blocking,
            PolicyKind::BlockThenPush { ell: 1 },
            PolicyKind::PushThenBlock { ell: 1 },
        ],
        91,
    );
    let p = sim_mean(&recs, PolicyKind::Pushout, Measure::Aoi);
    let b = sim_mean(&recs, PolicyKind::Blocking, Measure::Aoi);
    for k in [
        PolicyKind::BlockThenPush { ell: 1 },
        PolicyKind::PushThenBlock { ell: 1 },
    ] {
        let v = sim_mean(&recs, k, Measure::Aoi);
        assert!(
            v > p.min(b) * 0.98 && v < p.max(b) * 1.02,
            "{k}: {v} not within [{p}, {b}]"
        );
    }
}

#[test]
fn two_slot_pushout_beats_fifo_on_average() {
    let recs = pooled(
        DistSpec::exp(0.7),
        DistSpec::exp(1.0),
        vec![
            PolicyKind::Fifo,
            PolicyKind::PushoutTwo,
            PolicyKind::PreemptiveLifo,
            PolicyKind::Pushout,
        ],
        5,
    );
    for m in [Measure::Aoi, Measure::Naoi] {
        assert!(sim_mean(&recs, PolicyKind::PushoutTwo, m) <= sim_mean(&recs, PolicyKind::Fifo, m));
        // Same path; the windows end at each policy's own last success.
        let (l, p) = (
            sim_mean(&recs, PolicyKind::PreemptiveLifo, m),
            sim_mean(&recs, PolicyKind::Pushout, m),
        );
        assert!((l - p).abs() / p < 1e-3, "{l} vs {p}");
    }
    let fifo = analytic::fifo_mean_aoi_mm(0.7, 1.0).unwrap();
    let s = sim_mean(&recs, PolicyKind::Fifo, Measure::Aoi);
    assert!((s - fifo).abs() / fifo < 0.03, "{s} vs {fifo}");
}
