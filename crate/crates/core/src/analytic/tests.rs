use super::*;
use proptest::prelude::*;

const E: f64 = std::f64::consts::E;

fn eval(m: &ModelSpec, p: Policy, q: Quantity, r: Route) -> f64 {
    evaluate(m, p, q, r, &SolverConfig::default())
        .unwrap()
        .value
}

#[test]
fn table_mm_unit_rates() {
    let m = ModelSpec::mm(1.0, 1.0).unwrap();
    let got = [
        mean(&m, Policy::Pushout, Measure::Aoi).unwrap(),
        mean(&m, Policy::Pushout, Measure::Naoi).unwrap(),
        mean(&m, Policy::Blocking, Measure::Aoi).unwrap(),
        mean(&m, Policy::Blocking, Measure::Naoi).unwrap(),
    ];
    assert_eq!(got, [2.0, 1.0, 2.5, 1.5]);
}

#[test]
fn md_and_dm_cells() {
    let md = ModelSpec::new(DistSpec::exp(1.0), DistSpec::det(1.0)).unwrap();
    assert!((mean(&md, Policy::Pushout, Measure::Naoi).unwrap() - (E - 1.0)).abs() < 1e-12);
    assert!((mean(&md, Policy::Blocking, Measure::Naoi).unwrap() - 1.25).abs() < 1e-12);
    let dm = ModelSpec::new(DistSpec::det(1.0), DistSpec::exp(1.0)).unwrap();
    assert!((mean(&dm, Policy::Blocking, Measure::Naoi).unwrap() - 1.58198).abs() < 1e-5);
    assert!((mean(&dm, Policy::Pushout, Measure::Aoi).unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn transform_spot_values() {
    let m = ModelSpec::mm(1.0, 1.0).unwrap();
    assert!((lt_aoi(&m, Policy::Pushout, 1.0).unwrap() - 0.25).abs() < 1e-15);
    assert!((lt_aoi(&m, Policy::Blocking, 1.0).unwrap() - 0.1875).abs() < 1e-15);
    assert!((atom(&m, Policy::Blocking).unwrap() - 0.25).abs() < 1e-15);
    assert!((atom(&m, Policy::Pushout).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn mm_agrees_across_all_routes() {
    let cfg = SolverConfig::default();
    for (l, mu) in [(1.0, 1.0), (0.5, 1.0), (2.0, 1.0)] {
        let m = ModelSpec::mm(l, mu).unwrap();
        let qs = [
            Quantity::Mean(Measure::Aoi),
            Quantity::Mean(Measure::Naoi),
            Quantity::LtAoi(0.7),
            Quantity::LtNaoi(0.7),
            Quantity::Atom,
        ];
        for q in qs {
            let want = eval(&m, Policy::Blocking, q, Route::MM);
            for r in [Route::MGi, Route::GiM, Route::GiGi] {
                let got = evaluate(&m, Policy::Blocking, q, r, &cfg).unwrap();
                assert!(
                    ((got.value - want) / want).abs() < 1e-3,
                    "{l} {mu} {q:?} {r}: {} vs {want}",
                    got.value
                );
            }
            let po = eval(&m, Policy::Pushout, q, Route::MM);
            let gen = eval(&m, Policy::Pushout, q, Route::GiGi);
            assert!((po - gen).abs() < 1e-12, "{q:?}");
        }
    }
}

#[test]
fn renewal_route_matches_closed_forms_for_nonexponential_laws() {
    // Exponential on one side keeps a closed form to compare against.
    let models = [
        ModelSpec::new(DistSpec::det(1.0), DistSpec::exp(1.0)).unwrap(),
        ModelSpec::new(DistSpec::uniform(0.5, 1.5), DistSpec::exp(2.0)).unwrap(),
        ModelSpec::new(DistSpec::exp(1.0), DistSpec::uniform(0.2, 0.6)).unwrap(),
        ModelSpec::new(DistSpec::exp(1.5), DistSpec::det(1.0)).unwrap(),
        ModelSpec::new(DistSpec::exp(4.0), bimodal_service()).unwrap(),
    ];
    for m in &models {
        for q in [
            Quantity::Mean(Measure::Aoi),
            Quantity::Mean(Measure::Naoi),
            Quantity::LtAoi(1.0),
            Quantity::LtNaoi(0.5),
            Quantity::Atom,
        ] {
            let closed = eval(m, Policy::Blocking, q, Route::Auto);
            let grid = evaluate(
                m,
                Policy::Blocking,
                q,
                Route::GiGi,
                &SolverConfig::default(),
            )
            .unwrap();
            assert!(
                ((grid.value - closed) / closed).abs() < 1e-3,
                "{m} {q:?}: {} vs {closed}",
                grid.value
            );
            assert!(grid.residual.unwrap() < 1e-3);
        }
    }
}

#[test]
fn route_mismatch_rejected() {
    let m = ModelSpec::new(DistSpec::det(1.0), DistSpec::det(0.5)).unwrap();
    let r = evaluate(
        &m,
        Policy::Blocking,
        Quantity::Atom,
        Route::MGi,
        &SolverConfig::default(),
    );
    assert!(matches!(r, Err(AnalyticError::RouteMismatch { .. })));
}

#[test]
fn coarse_step_surfaces() {
    let m = ModelSpec::new(DistSpec::det(1.0), DistSpec::det(0.5)).unwrap();
    let cfg = SolverConfig {
        h: Some(0.2),
        ..SolverConfig::default()
    };
    let r = evaluate(
        &m,
        Policy::Blocking,
        Quantity::Mean(Measure::Aoi),
        Route::Auto,
        &cfg,
    );
    assert!(matches!(r, Err(AnalyticError::StepTooCoarse { .. })));
}

#[test]
fn deterministic_pair() {
    // D/D with σ < τ: every message is served, α ranges over [σ, σ+τ).
    let m = ModelSpec::new(DistSpec::det(1.0), DistSpec::det(0.4)).unwrap();
    for p in [Policy::Pushout, Policy::Blocking] {
        assert!(
            (mean(&m, p, Measure::Aoi).unwrap() - 0.9).abs() < 1e-9,
            "{p}"
        );
        assert!(
            (mean(&m, p, Measure::Naoi).unwrap() - 0.4).abs() < 1e-9,
            "{p}"
        );
        assert!((atom(&m, p).unwrap() - 0.6).abs() < 1e-9, "{p}");
    }
}

#[test]
fn gim_atom_sign() {
    let tau = DistSpec::exp(1.0);
    let general = blocking::gim_atom(&tau, 1.0);
    assert!((general - blocking::mm_atom(1.0, 1.0)).abs() < 1e-15);
    assert!((blocking::gim_atom_alternate_sign(&tau, 1.0) - general).abs() > 0.1);
}

#[test]
fn derivative_at_zero_is_mean() {
    let models = [
        ModelSpec::mm(1.0, 1.0).unwrap(),
        ModelSpec::new(DistSpec::exp(0.8), DistSpec::uniform(0.2, 1.0)).unwrap(),
        ModelSpec::new(DistSpec::uniform(0.5, 1.5), DistSpec::exp(1.3)).unwrap(),
        ModelSpec::new(DistSpec::erlang(2, 2.0), DistSpec::uniform(0.1, 0.9)).unwrap(),
    ];
    let (u, d) = (1e-4, 1e-5);
    for m in &models {
        for p in [Policy::Pushout, Policy::Blocking] {
            if p == Policy::Blocking && resolve_route(m, Route::Auto).unwrap() == Route::GiGi {
                continue;
            }
            for (meas, lt) in [
                (Measure::Aoi, Quantity::LtAoi as fn(f64) -> Quantity),
                (Measure::Naoi, Quantity::LtNaoi as fn(f64) -> Quantity),
            ] {
                let f = |x: f64| eval(m, p, lt(x), Route::Auto);
                let deriv = (f(u - d) - f(u + d)) / (2.0 * d);
                let mu = mean(m, p, meas).unwrap();
                assert!(
                    ((deriv - mu) / mu).abs() < 1e-3,
                    "{m} {p} {meas}: {deriv} vs {mu}"
                );
            }
        }
    }
}

#[test]
fn bracket_is_nonnegative() {
    let models = [
        ModelSpec::new(DistSpec::uniform(0.5, 1.5), DistSpec::uniform(0.2, 0.6)).unwrap(),
        ModelSpec::new(DistSpec::det(1.0), DistSpec::exp(0.5)).unwrap(),
        ModelSpec::mm(2.0, 1.0).unwrap(),
    ];
    for m in &models {
        let grid = SolverConfig::default()
            .resolve(&m.tau, Some(&m.sigma))
            .unwrap();
        let base = renewal::base_on(&m.tau, grid).unwrap();
        let r = RenewalRoute {
            tau: &m.tau,
            sigma: &m.sigma,
            base: &base,
        };
        for u in [0.25, 1.0, 4.0] {
            let d = renewal::discounted_on(&m.tau, u, grid).unwrap();
            assert!(r.bracket(&d) >= -1e-9, "{m} {u}");
        }
    }
}

#[test]
fn fifo_mean() {
    assert!((fifo_mean_aoi_mm(0.5, 1.0).unwrap() - 3.5).abs() < 1e-15);
    assert!(fifo_mean_aoi_mm(1e-6, 1.0).unwrap() > 1e5);
    assert!(matches!(
        fifo_mean_aoi_mm(1.0, 1.0),
        Err(AnalyticError::Unstable { .. })
    ));
    let l = 2f64.sqrt() - 1.0;
    let fifo = fifo_mean_aoi_mm(l, 1.0).unwrap();
    assert!((fifo - blocking::mm_mean_aoi(l, 1.0)).abs() < 1e-12);
}

#[test]
fn bimodal_crossover() {
    let fam = |l: f64| ModelSpec::new(DistSpec::exp(l), bimodal_service());
    let root = crossover(fam, Measure::Naoi, 1.0, 30.0).unwrap();
    assert!((root - 11.2).abs() < 0.1, "{root}");
}

#[test]
fn no_crossover_for_mm_and_md() {
    let mm = |l: f64| ModelSpec::mm(l, 1.0);
    assert!(matches!(
        crossover(mm, Measure::Naoi, 0.05, 50.0),
        Err(AnalyticError::NoSignChange { .. })
    ));
    let md = |l: f64| ModelSpec::new(DistSpec::exp(l), DistSpec::det(1.0));
    assert!(matches!(
        crossover(md, Measure::Naoi, 0.05, 50.0),
        Err(AnalyticError::NoSignChange { .. })
    ));
    for l in [0.1, 1.0, 10.0] {
        let m = ModelSpec::mm(l, 1.0).unwrap();
        assert!(
            mean(&m, Policy::Pushout, Measure::Naoi).unwrap()
                < mean(&m, Policy::Blocking, Measure::Naoi).unwrap()
        );
        let m = md(l).unwrap();
        assert!(
            mean(&m, Policy::Blocking, Measure::Naoi).unwrap()
                < mean(&m, Policy::Pushout, Measure::Naoi).unwrap()
        );
    }
}

#[test]
fn invalid_model_rejected() {
    // σ always longer than τ: no message ever completes under pushout.
    assert!(ModelSpec::new(DistSpec::det(1.0), DistSpec::det(2.0)).is_err());
}

fn law() -> impl Strategy<Value = DistSpec> {
    prop_oneof![
        (0.3f64..3.0).prop_map(DistSpec::exp),
        (0.3f64..2.0).prop_map(DistSpec::det),
        (0.05f64..1.0, 0.2f64..1.5).prop_map(|(a, w)| DistSpec::uniform(a, a + w)),
        (1u32..4, 1.0f64..4.0).prop_map(|(k, r)| DistSpec::erlang(k, r)),
    ]
}

fn closed_model() -> impl Strategy<Value = ModelSpec> {
    (law(), law(), any::<bool>()).prop_filter_map("P(τ>=σ)>0", |(a, b, side)| {
        let (tau, sigma) = if side {
            (DistSpec::exp(a.mean().recip()), b)
        } else {
            (a, DistSpec::exp(b.mean().recip()))
        };
        ModelSpec::new(tau, sigma).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transforms_are_completely_monotone_spot_checks(m in closed_model()) {
        for p in [Policy::Pushout, Policy::Blocking] {
            for q in [Quantity::LtAoi as fn(f64) -> Quantity, Quantity::LtNaoi] {
                let us = [1e-7, 0.25, 0.5, 1.0, 2.0, 4.0];
                let v: Vec<f64> = us.iter().map(|&u| eval(&m, p, q(u), Route::Auto)).collect();
                prop_assert!((v[0] - 1.0).abs() < 1e-4, "{} {} {:?}", m, p, v);
                for w in v.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-12 && w[1] > 0.0);
                }
                let e: Vec<f64> = (1..=6).map(|k| eval(&m, p, q(0.5 * k as f64), Route::Auto)).collect();
                for k in 1..e.len() - 1 {
                    prop_assert!(e[k] * e[k] <= e[k - 1] * e[k + 1] * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn atoms_are_probabilities(m in closed_model()) {
        for p in [Policy::Pushout, Policy::Blocking] {
            let a = atom(&m, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            let tail = eval(&m, p, Quantity::LtNaoi(1e6), Route::Auto);
            prop_assert!((tail - a).abs() < 1e-3);
        }
    }

    #[test]
    fn aoi_mean_exceeds_naoi_mean(m in closed_model()) {
        for p in [Policy::Pushout, Policy::Blocking] {
            let a = mean(&m, p, Measure::Aoi).unwrap();
            let b = mean(&m, p, Measure::Naoi).unwrap();
            prop_assert!(a.is_finite() && b.is_finite() && a > b && b > 0.0);
        }
    }

    #[test]
    fn zeta_matches_mm_conditional(l in 0.1f64..5.0, mu in 0.2f64..5.0, u in 0.1f64..3.0) {
        let m = ModelSpec::mm(l, mu).unwrap();
        let pos = eval(&m, Policy::Blocking, Quantity::LtNaoiPositive(u), Route::MGi);
        let w = l * (l + 2.0 * mu) / (l + mu).powi(2);
        prop_assert!((pos - w * zeta_lt(l / mu, u / mu)).abs() < 1e-9);
    }
}
