use super::*;
use crate::examples::{oscillator, rc_circuit, LinearFixture, OscillatorVariant};
use crate::linalg::Mat;
use crate::storage::storage_rate;
use proptest::prelude::*;

fn sig(src: &str) -> Vec<SignalExpr> {
    signal::parse_channels(src).unwrap()
}

fn h(dt: f64, t: f64) -> Horizon {
    Horizon::new(dt, t).unwrap()
}

#[test]
fn horizon_validation() {
    assert!(Horizon::new(0.0, 1.0).is_err());
    assert!(Horizon::new(-1e-3, 1.0).is_err());
    assert!(Horizon::new(0.1, 0.05).is_err());
    assert!(Horizon::new(f64::NAN, 1.0).is_err());
    let hz = h(1e-3, 2.0);
    assert_eq!(hz.steps(), 2000);
    assert_eq!(hz.index_of(0.5), 500);
}

#[test]
fn linear_state_equals_variation() {
    let lf = LinearFixture::bundled();
    let u = sig("sin(t)");
    let x0 = [0.5, -0.2];
    let tr = integrate_prolonged(&lf.system, &x0, &x0, &u, &u, &lf.storage, h(1e-3, 5.0)).unwrap();
    for (x, dx) in tr.x.iter().zip(&tr.dx) {
        assert!(norm(&sub(x, dx)) <= 1e-12, "{x:?} vs {dx:?}");
    }
}

#[test]
fn zero_section_is_invariant() {
    let osc = oscillator(OscillatorVariant::C);
    let tr = integrate_prolonged(
        &osc.system,
        &[0.4],
        &[0.0],
        &sig("1+0.5*sin(pi*t)"),
        &Constant::zeros(1),
        &osc.storage,
        h(1e-3, 3.0),
    )
    .unwrap();
    assert!(tr.dx.iter().all(|v| v[0] == 0.0));
    assert!(tr.ds.iter().all(|s| *s == 0.0));
}

#[test]
fn trajectory_lists_have_equal_length() {
    let osc = oscillator(OscillatorVariant::B);
    let tr = integrate_prolonged(
        &osc.system,
        &[0.3],
        &[1.0],
        &sig("sin(t)"),
        &sig("cos(t)"),
        &osc.storage,
        h(1e-2, 1.0),
    )
    .unwrap();
    let n = tr.len();
    assert_eq!(n, 101);
    for len in [tr.x.len(), tr.u.len(), tr.y.len(), tr.dx.len(), tr.du.len(), tr.dy.len(), tr.ds.len()] {
        assert_eq!(len, n);
    }
    for (k, t) in tr.times.iter().enumerate() {
        assert_eq!(*t, k as f64 * 1e-2);
        let s = eval_storage(&osc.storage, &tr.x[k], &tr.dx[k]).unwrap();
        assert_eq!(s, tr.ds[k]);
    }
}

#[test]
fn autonomous_storage_strictly_decreases() {
    let osc = oscillator(OscillatorVariant::B);
    let u = Constant::zeros(1);
    let tr = integrate_prolonged(&osc.system, &[1.0], &[1.0], &u, &u, &osc.storage, h(1e-3, 5.0)).unwrap();
    assert!(tr.truncated_at.is_none());
    for w in tr.ds.windows(2) {
        assert!(w[1] < w[0]);
    }
    // d/dt (dx' M dx) = -dx^2 for this metric, so dS decays at rate dx^2 / 2.
    for k in 0..tr.len() - 1 {
        let mid = 0.5 * (tr.dx[k][0] * tr.dx[k][0] + tr.dx[k + 1][0] * tr.dx[k + 1][0]);
        let expected = -0.5 * mid * 1e-3;
        assert!((tr.ds[k + 1] - tr.ds[k] - expected).abs() < 1e-8);
    }
}

#[test]
fn unforced_variation_never_gains_storage() {
    let osc = oscillator(OscillatorVariant::C);
    let tr = integrate_prolonged(
        &osc.system,
        &[-1.0],
        &[0.7],
        &sig("1+0.5*sin(pi*t)"),
        &Constant::zeros(1),
        &osc.storage,
        h(1e-3, 10.0),
    )
    .unwrap();
    assert!(dissipation_residual(&tr) <= 1e-9);
}

#[test]
fn forced_oscillator_satisfies_dissipation() {
    let osc = oscillator(OscillatorVariant::C);
    let tr = integrate_prolonged(
        &osc.system,
        &[0.2],
        &[1.0],
        &sig("1+0.5*sin(pi*t)"),
        &sig("0.1*cos(pi*t)"),
        &osc.storage,
        h(1e-3, 10.0),
    )
    .unwrap();
    assert!(dissipation_residual(&tr) <= 1e-6);
}

#[test]
fn lossless_fixture_balances_exactly() {
    let lf = LinearFixture::lossless();
    let tr = integrate_prolonged(
        &lf.system,
        &[1.0, 0.0],
        &[0.3, -0.4],
        &sig("sin(t)"),
        &sig("0.1*cos(0.5*t)"),
        &lf.storage,
        h(1e-3, 10.0),
    )
    .unwrap();
    let bal = dissipation_balance(&tr);
    assert!(bal.max_abs() <= 1e-6, "{bal:?}");
    assert!(dissipation_residual(&tr).abs() <= 1e-6);
}

#[test]
fn supply_integral_is_trapezoid() {
    let tr = Trajectory {
        dt: 0.5,
        times: vec![0.0, 0.5, 1.0],
        x: vec![vec![0.0]; 3],
        u: vec![vec![0.0]; 3],
        y: vec![vec![0.0]; 3],
        dx: vec![vec![0.0]; 3],
        du: vec![vec![1.0], vec![1.0], vec![2.0]],
        dy: vec![vec![0.0], vec![2.0], vec![1.0]],
        ds: vec![0.0, 1.0, 0.0],
        truncated_at: None,
    };
    assert_eq!(tr.supply_integral(), vec![0.0, 0.5, 1.5]);
    assert_eq!(dissipation_excess(&tr), vec![0.0, 0.5, -1.5]);
    assert_eq!(dissipation_residual(&tr), 0.5);
}

#[test]
fn oracle_linear_is_exact() {
    let lf = LinearFixture::bundled();
    let err = variational_oracle(&lf.system, &[0.5, -0.5], &[0.6, 0.8], &sig("sin(t)"), &[1.0], 1e-5, h(1e-3, 5.0)).unwrap();
    assert!(err <= 1e-9, "{err:e}");
}

#[test]
fn oracle_matches_pendulum_variation() {
    let osc = oscillator(OscillatorVariant::A);
    let err = variational_oracle(&osc.system, &[0.3], &[1.0], &Constant::zeros(1), &[0.0], 1e-5, h(1e-3, 5.0)).unwrap();
    assert!(err <= 1e-3, "{err:e}");
}

#[test]
fn oracle_zero_direction_is_zero() {
    let osc = oscillator(OscillatorVariant::C);
    let err = variational_oracle(&osc.system, &[0.3], &[0.0], &sig("1+0.5*sin(pi*t)"), &[0.0], 1e-5, h(1e-3, 2.0)).unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn oracle_rejects_bad_arguments() {
    let osc = oscillator(OscillatorVariant::A);
    let hz = h(1e-2, 1.0);
    assert!(variational_oracle(&osc.system, &[0.3], &[1.0], &Constant::zeros(1), &[0.0], 0.0, hz).is_err());
    assert!(variational_oracle(&osc.system, &[0.3], &[1.0, 0.0], &Constant::zeros(1), &[0.0], 1e-5, hz).is_err());
}

#[test]
fn oracle_series_grid_filter() {
    let osc = oscillator(OscillatorVariant::A);
    let s = variational_oracle_series(&osc.system, &[0.3], &[1.0], &Constant::zeros(1), &[1.0], 1e-5, h(5e-4, 1.0)).unwrap();
    assert_eq!(s.times.len(), 2001);
    let all = s.errors.iter().cloned().fold(0.0, f64::max);
    assert!(s.max_on_grid(1e-3) <= all);
}

#[test]
fn variation_converges_at_fourth_order() {
    // Error of the integrated variation against a fine reference shrinks by
    // about 16x per halving of the step.
    let osc = oscillator(OscillatorVariant::A);
    let u = sig("0.5*sin(2*t)");
    let du = sig("cos(t)");
    let run = |dt: f64| {
        let tr = integrate_prolonged(&osc.system, &[1.0], &[1.0], &u, &du, &osc.storage, h(dt, 2.0)).unwrap();
        (tr.x.last().unwrap()[0], tr.dx.last().unwrap()[0])
    };
    let (xr, dxr) = run(0.2 / 64.0);
    let (x1, dx1) = run(0.2);
    let (x2, dx2) = run(0.1);
    assert!((dx1 - dxr).abs() / (dx2 - dxr).abs() >= 8.0);
    assert!((x1 - xr).abs() / (x2 - xr).abs() >= 8.0);
}

#[test]
fn integration_is_deterministic() {
    let rc = rc_circuit();
    let u = sig("2+sin(2*pi*t)");
    let du = sig("cos(t)");
    let a = integrate_prolonged(&rc.system, &[1.0], &[0.5], &u, &du, &rc.storage, h(1e-3, 2.0)).unwrap();
    let b = integrate_prolonged(&rc.system, &[1.0], &[0.5], &u, &du, &rc.storage, h(1e-3, 2.0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn domain_exit_truncates() {
    let osc = oscillator(OscillatorVariant::C);
    let u = Constant(vec![5.0]);
    let tr = integrate_prolonged(&osc.system, &[0.0], &[1.0], &u, &Constant::zeros(1), &osc.storage, h(1e-3, 5.0)).unwrap();
    let t = tr.truncated_at.expect("large input leaves the chart");
    assert!(t < 5.0);
    let last = *tr.times.last().unwrap();
    assert!((t - last - 1e-3).abs() < 1e-12);
    let d = osc.system.domain().unwrap();
    assert!(tr.x.iter().all(|x| d.contains(x)));
    let base = integrate(&osc.system, &[0.0], &u, h(1e-3, 5.0)).unwrap();
    assert_eq!(base.truncated_at, Some(t));
}

#[test]
fn start_outside_domain_is_rejected() {
    let osc = oscillator(OscillatorVariant::C);
    let u = Constant::zeros(1);
    assert!(matches!(
        integrate(&osc.system, &[3.2], &u, h(1e-3, 1.0)),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn blow_up_reports_divergence() {
    let sys = ControlAffineSystem::builder(1, 1, 1)
        .drift(|x| vec![x[0] * x[0]])
        .input_matrix(|_| Mat::scalar(0.0))
        .output(|x| vec![x[0]])
        .build()
        .unwrap();
    match integrate(&sys, &[1.0], &Constant::zeros(1), h(1e-3, 2.0)) {
        Err(Error::Diverged { t }) => assert!(t > 0.99 && t < 1.01, "{t}"),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn dimension_checks() {
    let lf = LinearFixture::bundled();
    let u = Constant::zeros(1);
    let hz = h(1e-2, 1.0);
    assert!(integrate_prolonged(&lf.system, &[0.0], &[0.0, 0.0], &u, &u, &lf.storage, hz).is_err());
    assert!(integrate_prolonged(&lf.system, &[0.0, 0.0], &[0.0], &u, &u, &lf.storage, hz).is_err());
    assert!(integrate(&lf.system, &[0.0, 0.0], &Constant::zeros(2), hz).is_err());
}

#[test]
fn ensemble_of_identical_states_has_zero_spread() {
    let osc = oscillator(OscillatorVariant::C);
    let e = ensemble_contraction(&osc.system, &[vec![0.5], vec![0.5]], &sig("1+0.5*sin(pi*t)"), h(1e-3, 2.0), None).unwrap();
    assert!(e.spread.iter().all(|s| *s == 0.0));
    assert_eq!(e.final_spread, Some(0.0));
    assert_eq!(e.settling_time(0.0), Some(0.0));
}

#[test]
fn ensemble_needs_two_members() {
    let osc = oscillator(OscillatorVariant::C);
    assert!(ensemble_contraction(&osc.system, &[vec![0.5]], &Constant::zeros(1), h(1e-3, 1.0), None).is_err());
}

#[test]
fn oscillator_ensemble_entrains() {
    let osc = oscillator(OscillatorVariant::C);
    let x0s: Vec<Vec<f64>> = [-2.5, -1.0, 0.0, 1.0, 2.5].iter().map(|x| vec![*x]).collect();
    let hz = h(1e-3, 10.0);
    let e = ensemble_contraction(&osc.system, &x0s, &sig("1+0.5*sin(pi*t)"), hz, None).unwrap();
    assert_eq!(e.pairs.len(), 10);
    assert!(e.final_spread.unwrap() < 1e-2);
    let k = hz.index_of(2.0);
    assert!(e.spread[k..].windows(2).all(|w| w[1] <= w[0]));
    let em = ensemble_contraction(&osc.system, &x0s, &sig("1+0.5*sin(pi*t)"), hz, Some(&osc.storage)).unwrap();
    assert!(em.final_spread.unwrap() < 1e-2);
}

#[test]
fn diverged_members_are_flagged() {
    let sys = ControlAffineSystem::builder(1, 1, 1)
        .drift(|x| vec![x[0] * x[0]])
        .input_matrix(|_| Mat::scalar(0.0))
        .output(|x| vec![x[0]])
        .build()
        .unwrap();
    let e = ensemble_contraction(&sys, &[vec![-1.0], vec![-0.5], vec![1.0]], &Constant::zeros(1), h(1e-3, 2.0), None).unwrap();
    assert!(matches!(e.members[2], Err(Error::Diverged { .. })));
    assert_eq!(e.pairs, vec![(0, 1)]);
    assert!(e.final_spread.unwrap() > 0.0);
}

#[test]
fn settling_time_uses_last_crossing() {
    let e = Ensemble {
        times: vec![0.0, 1.0, 2.0, 3.0],
        members: Vec::new(),
        pairs: Vec::new(),
        distances: Vec::new(),
        spread: vec![1.0, 0.1, 0.5, 0.05],
        final_spread: Some(0.05),
    };
    assert_eq!(e.settling_time(0.2), Some(3.0));
    assert_eq!(e.settling_time(0.01), None);
    assert_eq!(e.spread_at(1.0), Some(0.1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // The chain-rule storage rate agrees with a one-sided second-order
    // difference of dS along a short prolonged solution.
    #[test]
    fn storage_rate_matches_difference(x0 in -2.5f64..2.5, dx0 in -2.0f64..2.0, u0 in -1.0f64..1.0, du0 in -1.0f64..1.0) {
        let osc = oscillator(OscillatorVariant::C);
        let dt = 1e-4;
        let u = Constant(vec![u0]);
        let du = Constant(vec![du0]);
        let tr = integrate_prolonged(&osc.system, &[x0], &[dx0], &u, &du, &osc.storage, h(dt, 2.0 * dt)).unwrap();
        let diff = (-3.0 * tr.ds[0] + 4.0 * tr.ds[1] - tr.ds[2]) / (2.0 * dt);
        let rate = storage_rate(&osc.storage, &osc.system, &[x0], &u.0, &[dx0], &du.0).unwrap();
        prop_assert!((diff - rate).abs() <= 1e-5 * (1.0 + rate.abs()), "{} vs {}", diff, rate);
    }
}
