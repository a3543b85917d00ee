//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and enforces
//! a wall-clock bound on top of the numerical tolerance.

use std::cell::Cell;
use std::time::{Duration, Instant};

use diffpass_core::conditions::{
    check_killing, check_metric_contraction, check_output_match, check_theorem_qpq, scan_region, Killing,
    MetricContraction, SampleGrid, TheoremQpq, Verdict,
};
use diffpass_core::examples::{lookup, oscillator, rc_circuit, LinearFixture, OscillatorVariant, RigidBody};
use diffpass_core::interconnect::{feedback, sum_storage, supply_split};
use diffpass_core::model::{gradient_to_affine, ControlAffineSystem};
use diffpass_core::prolong::variational_rhs;
use diffpass_core::simulate::signal::{Func, SignalExpr};
use diffpass_core::simulate::{
    dissipation_balance, dissipation_residual, ensemble_contraction, integrate, integrate_prolonged,
    variational_oracle_series, Constant, Ensemble, Horizon, Signal,
};
use diffpass_core::storage::{eval_storage, storage_rate, QuadraticStorage};
use diffpass_core::Mat;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};

fn report(id: u32, what: &str, ok: bool, elapsed: Duration, bound: Duration, detail: String) {
    let in_time = elapsed <= bound;
    let status = if ok && in_time { "PASS" } else { "FAIL" };
    println!("{status} criterion {id:>2}: {what}; {detail}; {:.3} s (bound {:.0} s)", elapsed.as_secs_f64(), bound.as_secs_f64());
    assert!(ok, "criterion {id} ({what}) violated: {detail}");
    assert!(in_time, "criterion {id} ({what}) exceeded {bound:?}: took {elapsed:?}");
}

fn sig(s: &str) -> Vec<SignalExpr> {
    vec![SignalExpr::parse(s).unwrap()]
}

/// Deterministic uniform draws from the proptest runner.
struct Draws(TestRunner);

impl Draws {
    fn new() -> Self {
        Draws(TestRunner::deterministic())
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (lo..hi).new_tree(&mut self.0).unwrap().current()
    }

    fn vector(&mut self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        lo.iter().zip(hi).map(|(a, b)| self.uniform(*a, *b)).collect()
    }

    /// Random direction with every component bounded away from zero.
    fn direction(&mut self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let s = if self.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
                s * self.uniform(0.2, 1.0)
            })
            .collect()
    }
}

#[test]
fn c01_oscillator_contraction_identity() {
    let start = Instant::now();
    let o = oscillator(OscillatorVariant::B);
    let cond = MetricContraction {
        system: o.system.clone(),
        storage: o.storage.clone(),
    };
    let grid = SampleGrid::interval(-3.13, 3.13, 1001).unwrap();
    let rep = scan_region(&cond, &grid, 1e-9);
    let dev = rep.margins.iter().map(|m| (m + 1.0).abs()).fold(0.0, f64::max);
    let ok = rep.margins.len() == 1001 && rep.failures.is_empty() && dev <= 1e-9;
    report(
        1,
        "osc-b metric contraction margin is -1 on 1001 points",
        ok && rep.verdict == Verdict::Pass,
        start.elapsed(),
        Duration::from_secs(1),
        format!("max |margin + 1| = {dev:.3e}, verdict {}", rep.verdict.as_str()),
    );
}

#[test]
fn c02_killing_dichotomy() {
    let start = Instant::now();
    let grid = SampleGrid::interval(-3.13, 3.13, 1001).unwrap();
    let unit = oscillator(OscillatorVariant::BUnitInput);
    let half = oscillator(OscillatorVariant::B);
    let worst = |o: &diffpass_core::examples::Oscillator| {
        grid.points()
            .map(|x| check_killing(&o.system, &o.storage, &x, &[]).unwrap()[0].abs())
            .fold(0.0, f64::max)
    };
    let unit_max = worst(&unit);
    let half_max = worst(&half);
    let unit_verdict = scan_region(
        &Killing {
            system: unit.system.clone(),
            storage: unit.storage.clone(),
            u_basis: vec![],
        },
        &grid,
        1e-8,
    )
    .verdict;
    report(
        2,
        "osc-b Killing residual: g = 1 fails, g = cos(x/2) holds",
        unit_max >= 0.5 && unit_verdict == Verdict::Fail && half_max <= 1e-9,
        start.elapsed(),
        Duration::from_secs(1),
        format!("g = 1 max {unit_max:.3e} ({}), g = cos(x/2) max {half_max:.3e}", unit_verdict.as_str()),
    );
}

#[test]
fn c03_theorem_qpq_margin() {
    let start = Instant::now();
    let gs = oscillator(OscillatorVariant::C).gradient.unwrap();
    let grid = SampleGrid::interval(-3.13, 3.13, 1001).unwrap();
    let p = Mat::scalar(1.0);
    let dev = grid
        .points()
        .map(|x| (check_theorem_qpq(&gs, &p, &x, None).unwrap().0 - 2.0).abs())
        .fold(0.0, f64::max);
    let rep = scan_region(&TheoremQpq { system: gs, weight: p }, &grid, 1e-9);
    report(
        3,
        "osc-c QPQ margin with P = 1 is 2",
        dev <= 1e-9 && rep.verdict == Verdict::Pass,
        start.elapsed(),
        Duration::from_secs(1),
        format!("max |margin - 2| = {dev:.3e}, verdict {}", rep.verdict.as_str()),
    );
}

#[test]
fn c04_dissipation_inequality() {
    let start = Instant::now();
    let h = Horizon::new(1e-3, 10.0).unwrap();
    let du = sig("0.1*cos(pi*t)");
    let mut draws = Draws::new();
    let rb = RigidBody::default();
    let rb_sys = gradient_to_affine(&rb.closed_loop());
    let rb_input = rb.tracking_input(&SignalExpr::parse("3*sin(pi*t)").unwrap()).unwrap();
    let rb_storage = rb.storage();
    let osc = oscillator(OscillatorVariant::C);
    let rc = rc_circuit();
    let lf = LinearFixture::bundled();
    // (name, system, storage, input, box for initial states)
    let cases: Vec<(&str, &ControlAffineSystem, &QuadraticStorage, Vec<SignalExpr>, Vec<f64>, Vec<f64>)> = vec![
        ("osc-c", &osc.system, &osc.storage, sig("1+0.5*sin(pi*t)"), vec![-2.5], vec![2.5]),
        ("rc", &rc.system, &rc.storage, sig("2+sin(2*pi*t)"), vec![0.1], vec![3.0]),
        ("rigid-body", &rb_sys, &rb_storage, rb_input, vec![-0.5, -0.1, -0.1], vec![0.5, 0.1, 0.1]),
        ("linear-fixture", &lf.system, &lf.storage, sig("sin(t)"), vec![-1.0, -1.0], vec![1.0, 1.0]),
    ];
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut ok = true;
    for (name, sys, st, u, lo, hi) in &cases {
        let mut w = f64::NEG_INFINITY;
        for _ in 0..5 {
            let x0 = draws.vector(lo, hi);
            let dx0 = draws.direction(sys.n());
            let tr = integrate_prolonged(sys, &x0, &dx0, u, &du, st, h).unwrap();
            ok &= tr.truncated_at.is_none() && tr.len() == h.steps() + 1;
            w = w.max(dissipation_residual(&tr));
        }
        ok &= w <= 1e-6;
        worst.push((name.to_string(), w));
    }
    let lossless = LinearFixture::lossless();
    let dv = sig("0.1*cos(0.5*t)");
    let mut balance: f64 = 0.0;
    for _ in 0..5 {
        let x0 = draws.vector(&[-1.0, -1.0], &[1.0, 1.0]);
        let dx0 = draws.direction(2);
        let tr = integrate_prolonged(&lossless.system, &x0, &dx0, &sig("sin(t)"), &dv, &lossless.storage, h).unwrap();
        balance = balance.max(dissipation_balance(&tr).max_abs());
    }
    ok &= balance <= 1e-6;
    let detail = worst
        .iter()
        .map(|(n, w)| format!("{n} {w:.2e}"))
        .chain(std::iter::once(format!("lossless |balance| {balance:.2e}")))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        4,
        "dissipation residual over 5 random initial states per example",
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        detail,
    );
}

#[test]
fn c05_variational_oracle() {
    let start = Instant::now();
    let eps = 1e-5;
    // A difference quotient over `eps` cannot resolve changes below one
    // rounding unit of the state divided by `eps`.
    let resolution = f64::EPSILON / eps;
    let oa = oscillator(OscillatorVariant::A);
    let ob = oscillator(OscillatorVariant::B);
    let oc = oscillator(OscillatorVariant::C);
    let rc = rc_circuit();
    let rb = RigidBody::default();
    let rb_sys = gradient_to_affine(&rb.closed_loop());
    let rb_input = rb.tracking_input(&SignalExpr::parse("3*sin(pi*t)").unwrap()).unwrap();
    let lf = LinearFixture::bundled();
    let forcing = sig("1+0.5*sin(pi*t)");
    let zero = Constant(vec![0.0]);
    let rc_drive = rc_input();
    let sine = sig("sin(t)");
    // (name, system, x0, direction, input, bound)
    let cases: Vec<(&str, &ControlAffineSystem, Vec<f64>, Vec<f64>, &dyn Signal, f64)> = vec![
        ("osc-a", &oa.system, vec![0.3], vec![1.0], &zero, 1e-3),
        ("osc-b", &ob.system, vec![0.3], vec![1.0], &forcing, 1e-3),
        ("osc-c", &oc.system, vec![0.3], vec![1.0], &forcing, 1e-3),
        ("rc", &rc.system, vec![0.5], vec![1.0], &rc_drive, 1e-3),
        ("rigid-body", &rb_sys, vec![0.2, 0.1, -0.1], vec![0.6, 0.0, 0.8], &rb_input, 1e-3),
        ("linear-fixture", &lf.system, vec![0.5, -0.5], vec![0.6, 0.8], &sine, 1e-9),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, sys, x0, dir, u, bound) in cases {
        let du = vec![1.0; sys.m()];
        let coarse = variational_oracle_series(sys, &x0, &dir, u, &du, eps, Horizon::new(1e-3, 5.0).unwrap()).unwrap();
        let fine = variational_oracle_series(sys, &x0, &dir, u, &du, eps, Horizon::new(5e-4, 5.0).unwrap()).unwrap();
        let full = coarse.times.len() == 5001 && fine.times.len() == 10001;
        let e1 = coarse.errors.iter().copied().fold(0.0, f64::max);
        let e1_grid = coarse.max_on_grid(1e-3);
        let e2_grid = fine.max_on_grid(1e-3);
        ok &= full && e1 <= bound && e2_grid <= e1_grid + resolution;
        parts.push(format!("{name} {e1:.2e} -> {e2_grid:.2e}"));
    }
    report(
        5,
        "variational oracle at eps 1e-5, dt 1e-3 and dt 5e-4",
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        format!("{} (halving allowance {resolution:.1e})", parts.join(", ")),
    );
}

fn rc_input() -> Vec<SignalExpr> {
    sig("2+sin(2*pi*t)")
}

/// Non-increasing from the grid time `t0` on, at the resolution of the
/// states: the distance between two independently rounded states near
/// magnitude `s` moves in steps of one ulp of `s`, so a rise of a few ulps
/// is not an increase of the spread.
fn monotone_after(e: &Ensemble, t0: f64) -> bool {
    let k0 = e.times.iter().position(|t| *t >= t0 - 1e-12).unwrap();
    let scale = |k: usize| {
        e.members
            .iter()
            .filter_map(|m| m.as_ref().ok())
            .flat_map(|m| m.x[k].iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    };
    (k0..e.spread.len() - 1).all(|k| e.spread[k + 1] <= e.spread[k] + 4.0 * f64::EPSILON * scale(k + 1))
}

#[test]
fn c06_oscillator_entrainment() {
    let start = Instant::now();
    let oc = oscillator(OscillatorVariant::C);
    let x0s: Vec<Vec<f64>> = [-2.5, -1.0, 0.0, 1.0, 2.5].iter().map(|x| vec![*x]).collect();
    let e = ensemble_contraction(&oc.system, &x0s, &sig("1+0.5*sin(pi*t)"), Horizon::new(1e-3, 10.0).unwrap(), None).unwrap();
    let final_spread = e.spread_at(10.0).unwrap();
    let mono = monotone_after(&e, 2.0);
    report(
        6,
        "osc-c ensemble entrains",
        e.pairs.len() == 10 && final_spread <= 1e-2 && mono,
        start.elapsed(),
        Duration::from_secs(5),
        format!("spread at t = 10 {final_spread:.3e}, non-increasing from t = 2: {mono}"),
    );
}

#[test]
fn c07_rc_contraction() {
    let start = Instant::now();
    let rc = rc_circuit();
    let x0s: Vec<Vec<f64>> = [0.5, 1.0, 2.0, 5.0].iter().map(|x| vec![*x]).collect();
    // The conductance v^5 is stiff at v = 5; dt = 1e-3 leaves the RK4
    // stability region there.
    let e = ensemble_contraction(&rc.system, &x0s, &rc_input(), Horizon::new(1e-4, 10.0).unwrap(), None).unwrap();
    let final_spread = e.spread_at(10.0).unwrap();
    let mono = monotone_after(&e, 1.0);
    report(
        7,
        "RC ensemble contracts",
        e.pairs.len() == 6 && final_spread <= 1e-3 && mono,
        start.elapsed(),
        Duration::from_secs(5),
        format!("spread at t = 10 {final_spread:.3e}, non-increasing from t = 1: {mono}"),
    );
}

#[test]
fn c08_rigid_body_tracking() {
    let start = Instant::now();
    let rb = RigidBody::default();
    let d = SignalExpr::parse("3*sin(pi*t)").unwrap();
    let h = Horizon::new(1e-3, 20.0).unwrap();
    let base_sys = gradient_to_affine(&rb.closed_loop());
    let fb_sys = gradient_to_affine(&rb.closed_loop_with_output_feedback(0.5));
    let x0s = vec![vec![-0.3, 0.0, 0.0], vec![0.0, 0.01, 0.0], vec![0.3, 0.0, 0.01]];
    let mut initial = x0s.clone();
    initial.push(vec![0.0, 0.1, 0.1]);
    let v = rb.tracking_input(&d).unwrap();
    let mut track_err: f64 = 0.0;
    for x0 in &initial {
        let tr = integrate(&base_sys, x0, &v, h).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.x) {
            if *t >= 10.0 - 1e-9 {
                track_err = track_err.max((x[0] - d.eval(*t)).abs());
            }
        }
    }
    let base = ensemble_contraction(&base_sys, &x0s, &v, h, None).unwrap();
    let fb = ensemble_contraction(&fb_sys, &x0s, &rb.feedback_tracking_input(&d, 0.5).unwrap(), h, None).unwrap();
    let (tb, tf) = (base.settling_time(0.05), fb.settling_time(0.05));
    let earlier = matches!((tb, tf), (Some(b), Some(f)) if f < b);
    report(
        8,
        "rigid body tracks 3 sin(pi t); output feedback settles earlier",
        track_err <= 0.05 && earlier,
        start.elapsed(),
        Duration::from_secs(5),
        format!("max |w1 - d| on [10, 20] {track_err:.3e}, settling to 0.05: base {tb:?}, feedback {tf:?}"),
    );
}

#[test]
fn c09_feedback_interconnection() {
    let start = Instant::now();
    let oc = oscillator(OscillatorVariant::C);
    let sys = feedback(&oc.system, &oc.system).unwrap();
    let st = sum_storage(&oc.storage, &oc.storage);
    let v = vec![SignalExpr::parse("0.3*sin(t)").unwrap(), SignalExpr::parse("0.2*cos(t)").unwrap()];
    // Variation along a time shift of the external input.
    let dv: Vec<SignalExpr> = v.iter().map(|e| e.derivative()).collect();
    let tr = integrate_prolonged(&sys, &[0.5, -0.5], &[1.0, -0.5], &v, &dv, &st, Horizon::new(1e-3, 10.0).unwrap()).unwrap();
    let residual = dissipation_residual(&tr);
    let mut cancel: f64 = 0.0;
    for (dy, du) in tr.dy.iter().zip(&tr.du) {
        let s = supply_split(1, dy, du).unwrap();
        cancel = cancel.max((s.internal - s.external).abs());
    }
    report(
        9,
        "feedback of two osc-c copies with summed storage",
        tr.truncated_at.is_none() && residual <= 1e-6 && cancel <= 1e-12,
        start.elapsed(),
        Duration::from_secs(5),
        format!("dissipation residual {residual:.3e}, max supply mismatch {cancel:.3e}"),
    );
}

#[test]
fn c10_linear_equivalence() {
    let start = Instant::now();
    let lf = LinearFixture::bundled();
    let ex = lookup("linear-fixture").unwrap();
    let same_storage = lf.storage.metric(&[0.0, 0.0]).unwrap() == lf.p;
    let mut contraction = f64::NEG_INFINITY;
    let mut killing: f64 = 0.0;
    let mut output: f64 = 0.0;
    for x in ex.default_grid.points() {
        contraction = contraction.max(check_metric_contraction(&lf.system, &lf.storage, &x).unwrap());
        for r in check_killing(&lf.system, &lf.storage, &x, &[]).unwrap() {
            killing = killing.max(r.abs());
        }
        output = output.max(check_output_match(&lf.system, &lf.storage, &x).unwrap());
    }
    report(
        10,
        "passive linear fixture satisfies all three conditions with M = P",
        same_storage && contraction <= 1e-12 && killing <= 1e-12 && output <= 1e-12,
        start.elapsed(),
        Duration::from_secs(1),
        format!("contraction lambda_max {contraction:.1e}, Killing {killing:.1e}, output {output:.1e}"),
    );
}

fn arb_expr() -> impl Strategy<Value = SignalExpr> {
    let leaf = prop_oneof![
        (0u32..1000, 0u32..4).prop_map(|(m, s)| SignalExpr::Const(m as f64 / 10f64.powi(s as i32))),
        Just(SignalExpr::Time),
        Just(SignalExpr::Pi),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| SignalExpr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Div(Box::new(a), Box::new(b))),
            (inner, 0usize..3).prop_map(|(a, k)| SignalExpr::Call([Func::Sin, Func::Cos, Func::Exp][k], Box::new(a))),
        ]
    })
}

/// Runs `test` on `cases` generated inputs and returns how many ran.
fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let count = Cell::new(0u32);
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |v| {
            count.set(count.get() + 1);
            test(v)
        })
        .map_err(|e| e.to_string())?;
    Ok(count.get())
}

#[test]
fn c11_property_suites() {
    let start = Instant::now();
    let cases = 200;
    let oc = oscillator(OscillatorVariant::C);
    let rb = RigidBody::default();
    let rb_sys = gradient_to_affine(&rb.closed_loop());
    let ob = oscillator(OscillatorVariant::B);

    let linearity = run_property(
        cases,
        (
            proptest::collection::vec(-0.3f64..0.3, 3),
            proptest::collection::vec(-2.0f64..2.0, 1),
            proptest::collection::vec(-2.0f64..2.0, 12),
            (-3.0f64..3.0, -3.0f64..3.0),
        ),
        |(x, u, v, (a, b))| {
            let (dx1, dx2, du1, du2) = (&v[0..3], &v[3..6], &v[6..7], &v[7..8]);
            let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
            let lhs = variational_rhs(&rb_sys, &x, &u, &mix(dx1, dx2), &mix(du1, du2)).unwrap();
            let r1 = variational_rhs(&rb_sys, &x, &u, dx1, du1).unwrap();
            let r2 = variational_rhs(&rb_sys, &x, &u, dx2, du2).unwrap();
            for (l, r) in lhs.iter().zip(mix(&r1, &r2)) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()), "{} vs {}", l, r);
            }
            Ok(())
        },
    );

    let grid = SampleGrid::interval(-3.13, 3.13, 101).unwrap();
    let base_verdicts = (
        scan_region(&MetricContraction { system: ob.system.clone(), storage: ob.storage.clone() }, &grid, 1e-9).verdict,
        scan_region(&TheoremQpq { system: oc.gradient.clone().unwrap(), weight: Mat::scalar(1.0) }, &grid, 1e-9).verdict,
    );
    let scale = run_property(cases, 1e-2f64..1e2, |c| {
        let contraction = scan_region(
            &MetricContraction {
                system: ob.system.clone(),
                storage: ob.storage.scaled(c),
            },
            &grid,
            1e-9,
        )
        .verdict;
        let qpq = scan_region(
            &TheoremQpq {
                system: oc.gradient.clone().unwrap(),
                weight: Mat::scalar(c),
            },
            &grid,
            1e-9,
        )
        .verdict;
        prop_assert_eq!((contraction, qpq), base_verdicts);
        Ok(())
    });

    let chain = run_property(
        cases,
        (-3.0f64..3.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        |(x, u, dx, du)| {
            let (x, u, dx, du) = ([x], [u], [dx], [du]);
            let xdot = oc.system.rhs(&x, &u).unwrap();
            let dxdot = variational_rhs(&oc.system, &x, &u, &dx, &du).unwrap();
            let h = 1e-5;
            let s = |k: f64| eval_storage(&oc.storage, &[x[0] + k * h * xdot[0]], &[dx[0] + k * h * dxdot[0]]).unwrap();
            let fd = (s(1.0) - s(-1.0)) / (2.0 * h);
            let rate = storage_rate(&oc.storage, &oc.system, &x, &u, &dx, &du).unwrap();
            prop_assert!((rate - fd).abs() <= 1e-5 * (1.0 + rate.abs()), "{} vs {}", rate, fd);
            Ok(())
        },
    );

    let round_trip = run_property(cases, arb_expr(), |e| {
        let printed = e.to_string();
        let reparsed = SignalExpr::parse(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
        prop_assert_eq!(&reparsed, &e);
        prop_assert_eq!(reparsed.to_string(), printed);
        Ok(())
    });

    let suites = [
        ("linearity", linearity),
        ("scale invariance", scale),
        ("storage chain rule", chain),
        ("grammar round trip", round_trip),
    ];
    let ok = suites.iter().all(|(_, r)| matches!(r, Ok(n) if *n >= 100));
    let detail = suites
        .iter()
        .map(|(name, r)| match r {
            Ok(n) => format!("{name} {n} cases"),
            Err(e) => format!("{name} failed: {e}"),
        })
        .collect::<Vec<_>>()
        .join(", ");
    report(11, "property suites", ok, start.elapsed(), Duration::from_secs(30), detail);
}
