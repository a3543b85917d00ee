//! Bundled systems: a pendulum-like oscillator in three formulations, a
//! nonlinear RC circuit, a damped rigid body, and a passive linear system.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::conditions::{
    contraction_matrix, Condition, GradientNatural, Killing, MetricContraction, OutputMatch, QpqOutput,
    RigidBodyDamping, SampleGrid, TheoremQpq,
};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig_bounds, Mat};
use crate::model::{
    brayton_to_gradient, constant_matrix_field, gradient_to_affine, matrix_field, matrix_field_derivative,
    vector_field, BraytonMoserSystem, ControlAffineSystem, Domain, GradientOutput, GradientSystem,
};
use crate::simulate::signal::SignalExpr;
use crate::storage::{make_qpq_storage, natural_storage, Definiteness, QuadraticStorage};

/// Margin kept from the open ends of the oscillator chart.
pub const CHART_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscillatorVariant {
    /// `x' = -sin x + u`, `M = 1`, `y = x`.
    A,
    /// `x' = -sin x + cos(x/2) u`, `M = 1/(1 + cos x)`.
    B,
    /// Same metric as `B` with `g = 1` and `y = tan(x/2)`; the input field is
    /// not a Killing field of the metric.
    BUnitInput,
    /// Gradient form `Q x' = -2 sin(x/2) + u` with `Q = 1/cos(x/2)`.
    C,
}

#[derive(Debug, Clone)]
pub struct Oscillator {
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
    pub gradient: Option<GradientSystem>,
    pub domain: Domain,
}

/// `int_0^x cos(z/2) / (1 + cos z) dz`
pub fn oscillator_b_output(x: f64) -> f64 {
    libm::asinh(libm::tan(0.5 * x))
}

// Weight `1 / (1 + cos x)`, written in half angles to avoid cancellation
// near the chart boundary.
fn metric_b() -> QuadraticStorage {
    QuadraticStorage::custom(
        1,
        matrix_field(|x| {
            let c = libm::cos(0.5 * x[0]);
            Mat::scalar(0.5 / (c * c))
        }),
        Some(matrix_field_derivative(|x| {
            let c = libm::cos(0.5 * x[0]);
            vec![Mat::scalar(0.5 * libm::sin(0.5 * x[0]) / (c * c * c))]
        })),
        Definiteness::PositiveDefinite,
    )
}

/// Half-angle gradient form: `Q = sec(x/2)`, `V = -4 cos(x/2)`, `B = 1`,
/// output `y = dq/dx` with `q'' = Q` and `q'(0) = 0`.
pub fn oscillator_gradient() -> GradientSystem {
    let sec_half = |x: f64| 1.0 / libm::cos(0.5 * x);
    GradientSystem::builder(Mat::scalar(1.0))
        .metric(move |x| Mat::scalar(sec_half(x[0])))
        .metric_derivative(move |x| {
            let s = sec_half(x[0]);
            vec![Mat::scalar(0.5 * libm::sin(0.5 * x[0]) * s * s)]
        })
        .potential(
            |x| vec![2.0 * libm::sin(0.5 * x[0])],
            Some(matrix_field(|x| Mat::scalar(libm::cos(0.5 * x[0])))),
        )
        .output(GradientOutput::MetricPotential {
            grad_q: vector_field(|x| vec![2.0 * libm::asinh(libm::tan(0.5 * x[0]))]),
            c: Mat::scalar(1.0),
        })
        .domain(Domain::interval(-PI + CHART_MARGIN, PI - CHART_MARGIN))
        .build()
        .expect("oscillator gradient system is well formed")
}

pub fn oscillator(variant: OscillatorVariant) -> Oscillator {
    let wide = Domain::interval(-PI + CHART_MARGIN, PI - CHART_MARGIN);
    let build = |b: crate::model::ControlAffineBuilder| b.build().expect("oscillator is well formed");
    let base = || {
        ControlAffineSystem::builder(1, 1, 1)
            .drift(|x| vec![-libm::sin(x[0])])
            .drift_jacobian(|x| Mat::scalar(-libm::cos(x[0])))
    };
    match variant {
        OscillatorVariant::A => {
            let domain = Domain::interval(-PI / 2.0 + CHART_MARGIN, PI / 2.0 - CHART_MARGIN);
            let system = build(
                base()
                    .input_matrix(|_| Mat::scalar(1.0))
                    .input_jacobian(|_, _| Mat::scalar(0.0))
                    .output(|x| vec![x[0]])
                    .output_jacobian(|_| Mat::scalar(1.0))
                    .domain(domain.clone()),
            );
            Oscillator {
                system,
                storage: QuadraticStorage::constant(Mat::scalar(1.0)).expect("unit weight"),
                gradient: None,
                domain,
            }
        }
        OscillatorVariant::B => {
            let system = build(
                base()
                    .input_matrix(|x| Mat::scalar(libm::cos(0.5 * x[0])))
                    .input_jacobian(|x, u| Mat::scalar(-0.5 * libm::sin(0.5 * x[0]) * u[0]))
                    .output(|x| vec![oscillator_b_output(x[0])])
                    .output_jacobian(|x| Mat::scalar(0.5 / libm::cos(0.5 * x[0])))
                    .domain(wide.clone()),
            );
            Oscillator {
                system,
                storage: metric_b(),
                gradient: None,
                domain: wide,
            }
        }
        OscillatorVariant::BUnitInput => {
            let system = build(
                base()
                    .input_matrix(|_| Mat::scalar(1.0))
                    .input_jacobian(|_, _| Mat::scalar(0.0))
                    .output(|x| vec![libm::tan(0.5 * x[0])])
                    .output_jacobian(|x| {
                        let c = libm::cos(0.5 * x[0]);
                        Mat::scalar(0.5 / (c * c))
                    })
                    .domain(wide.clone()),
            );
            Oscillator {
                system,
                storage: metric_b(),
                gradient: None,
                domain: wide,
            }
        }
        OscillatorVariant::C => {
            let gs = oscillator_gradient();
            let storage = make_qpq_storage(&gs, &Mat::scalar(1.0)).expect("unit weight");
            Oscillator {
                system: gradient_to_affine(&gs),
                storage,
                gradient: Some(gs),
                domain: wide,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RcCircuit {
    pub gradient: GradientSystem,
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
}

/// Capacitor with charge `log(1 + v)` in parallel with a conductance
/// `R(v) = v^5`, driven by a current source:
/// `v'/(1 + v) = -v^5 + i`, output `y = log(1 + v)`.
pub fn rc_circuit() -> RcCircuit {
    let bm = BraytonMoserSystem {
        nf: 0,
        ne: 1,
        hess_hf: constant_matrix_field(Mat::zeros(0, 0)),
        hess_he: matrix_field(|v| Mat::scalar(1.0 / (1.0 + v[0]))),
        d_hess_hf: None,
        d_hess_he: Some(matrix_field_derivative(|v| {
            let s = 1.0 + v[0];
            vec![Mat::scalar(-1.0 / (s * s))]
        })),
        grad_hstar: Some(vector_field(|v| vec![libm::log1p(v[0])])),
        grad_p: vector_field(|v| vec![-libm::pow(v[0], 5.0)]),
        hess_p: Some(matrix_field(|v| Mat::scalar(-5.0 * libm::pow(v[0], 4.0)))),
        b: Mat::scalar(1.0),
    };
    let gradient = brayton_to_gradient(&bm)
        .expect("RC model is well formed")
        .with_domain(Some(Domain::interval(0.0, 10.0)));
    let storage = make_qpq_storage(&gradient, &Mat::scalar(1.0)).expect("unit weight");
    RcCircuit {
        system: gradient_to_affine(&gradient),
        gradient,
        storage,
    }
}

/// Rigid body `I w' = (I2 - I3) w2 w3 e1 + ... + u` with the damping
/// feedback `u = I(-diag(r) w + G v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    inertia: [f64; 3],
    damping: [f64; 3],
    g: Mat,
}

impl Default for RigidBody {
    fn default() -> Self {
        Self {
            inertia: [3.0, 2.0, 1.0],
            damping: [0.2, 0.2, 0.2],
            g: Mat::column(&[1.0, 0.0, 0.0]),
        }
    }
}

fn hess_p(w: &[f64]) -> Mat {
    Mat::from_rows(&[&[0.0, w[2], w[1]], &[w[2], 0.0, w[0]], &[w[1], w[0], 0.0]])
}

fn grad_p(w: &[f64]) -> Vec<f64> {
    vec![w[1] * w[2], w[0] * w[2], w[0] * w[1]]
}

impl RigidBody {
    pub fn new(inertia: [f64; 3], damping: [f64; 3], g: Mat) -> Result<Self> {
        let [i1, i2, i3] = inertia;
        if !(i1 > i2 && i2 > i3 && i3 > 0.0) {
            return Err(Error::InvalidInertia);
        }
        crate::model::check_dim("G rows", 3, g.rows())?;
        Ok(Self { inertia, damping, g })
    }

    pub fn inertia(&self) -> [f64; 3] {
        self.inertia
    }

    pub fn damping(&self) -> [f64; 3] {
        self.damping
    }

    pub fn input_map(&self) -> &Mat {
        &self.g
    }

    /// `diag(I1/(I2-I3), I2/(I3-I1), I3/(I1-I2))`
    pub fn metric(&self) -> Mat {
        let [i1, i2, i3] = self.inertia;
        Mat::from_diag(&[i1 / (i2 - i3), i2 / (i3 - i1), i3 / (i1 - i2)])
    }

    /// `Q^-2`, which makes the QPQ storage the identity.
    pub fn weight(&self) -> Mat {
        let q = self.metric();
        Mat::from_diag(&[
            1.0 / (q[(0, 0)] * q[(0, 0)]),
            1.0 / (q[(1, 1)] * q[(1, 1)]),
            1.0 / (q[(2, 2)] * q[(2, 2)]),
        ])
    }

    /// `Q w' = dp/dw + Qtilde^-1 u` with `p = w1 w2 w3`.
    pub fn open_loop(&self) -> GradientSystem {
        let [i1, i2, i3] = self.inertia;
        let b = Mat::from_diag(&[1.0 / (i2 - i3), 1.0 / (i3 - i1), 1.0 / (i1 - i2)]);
        GradientSystem::builder(b)
            .constant_metric(self.metric())
            .potential(
                |w| grad_p(w).into_iter().map(|v| -v).collect(),
                Some(matrix_field(|w| hess_p(w).scale(-1.0))),
            )
            .build()
            .expect("rigid body is well formed")
    }

    /// Damping matrix of the closed loop with extra output feedback
    /// `v -> v - k y`.
    pub fn damping_matrix(&self, k: f64) -> Mat {
        Mat::from_diag(&self.damping).add(&self.g.matmul(&self.g.transpose()).scale(k))
    }

    /// `Q w' = dp/dw - Q R w + Q G v`, output `y = G' w`.
    pub fn closed_loop(&self) -> GradientSystem {
        self.closed_loop_with_output_feedback(0.0)
    }

    /// Closed loop after substituting `v = -k y + w` for the new input `w`.
    pub fn closed_loop_with_output_feedback(&self, k: f64) -> GradientSystem {
        let q = self.metric();
        let qr = q.matmul(&self.damping_matrix(k));
        let qr2 = qr.clone();
        let qinv = Mat::from_diag(&[1.0 / q[(0, 0)], 1.0 / q[(1, 1)], 1.0 / q[(2, 2)]]);
        let q2 = q.clone();
        GradientSystem::builder(q.matmul(&self.g))
            .constant_metric(q.clone())
            .field(
                move |w| {
                    let mut a = grad_p(w);
                    let d = qr.mul_vec(w);
                    for i in 0..3 {
                        a[i] -= d[i];
                    }
                    a
                },
                Some(matrix_field(move |w| hess_p(w).sub(&qr2))),
            )
            .output(GradientOutput::MetricPotential {
                grad_q: vector_field(move |w| q2.mul_vec(w)),
                c: self.g.transpose().matmul(&qinv),
            })
            .build()
            .expect("rigid body is well formed")
    }

    pub fn storage(&self) -> QuadraticStorage {
        make_qpq_storage(&self.closed_loop(), &self.weight()).expect("Q^-2 is positive definite")
    }

    /// Pointwise damping condition for the closed loop with output gain `k`.
    pub fn damping_condition(&self, k: f64) -> RigidBodyDamping {
        let r = self.damping_matrix(k);
        RigidBodyDamping {
            system: self.closed_loop_with_output_feedback(k),
            damping: vec![r[(0, 0)], r[(1, 1)], r[(2, 2)]],
        }
    }

    fn check_tracking_map(&self) -> Result<()> {
        if self.g != Mat::column(&[1.0, 0.0, 0.0]) {
            return Err(Error::InvalidArgument("tracking inputs assume G = (1, 0, 0)'".into()));
        }
        Ok(())
    }

    /// `v = r1 d + d'`, under which `w1 = d` is a solution.
    pub fn tracking_input(&self, d: &SignalExpr) -> Result<Vec<SignalExpr>> {
        self.feedback_tracking_input(d, 0.0)
    }

    /// New input `(r1 + k) d + d'` for the loop closed with `v = -k y + w`.
    pub fn feedback_tracking_input(&self, d: &SignalExpr, k: f64) -> Result<Vec<SignalExpr>> {
        self.check_tracking_map()?;
        let gain = self.damping[0] + k;
        Ok(vec![crate::simulate::signal::add(
            crate::simulate::signal::mul(SignalExpr::Const(gain), d.clone()),
            d.derivative(),
        )])
    }
}

/// Linear system `x' = A x + B u`, `y = C x` with constant storage `P`.
#[derive(Debug, Clone)]
pub struct LinearFixture {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub p: Mat,
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
}

/// Tolerance on `lambda_max(A'P + PA)` when accepting a fixture.
pub const FIXTURE_TOL: f64 = 1e-12;

impl LinearFixture {
    /// Requires `P >= 0` and `A'P + PA <= 0`. `C` is not checked against
    /// `P B`, so mismatched outputs can be constructed on purpose.
    pub fn new(a: Mat, b: Mat, c: Mat, p: Mat) -> Result<Self> {
        let system = ControlAffineSystem::linear(a.clone(), b.clone(), c.clone())?;
        let storage = QuadraticStorage::constant(p.clone())?;
        let lmax = sym_eig_bounds(&a.transpose().matmul(&p).add(&p.matmul(&a)).symmetrized(), 1e-14)?.max;
        if lmax > FIXTURE_TOL {
            return Err(Error::InvalidFixture {
                reason: "A'P + PA has a positive eigenvalue",
                value: lmax,
            });
        }
        Ok(Self {
            a,
            b,
            c,
            p,
            system,
            storage,
        })
    }

    /// `A = [[0, 1], [-1, -1]]`, `P = I`, `B = (0, 1)'`, `C = (0, 1)`.
    pub fn bundled() -> Self {
        Self::new(
            Mat::from_rows(&[&[0.0, 1.0], &[-1.0, -1.0]]),
            Mat::column(&[0.0, 1.0]),
            Mat::from_rows(&[&[0.0, 1.0]]),
            Mat::identity(2),
        )
        .expect("bundled fixture is passive")
    }

    /// Undamped variant, `A'P + PA = 0`.
    pub fn lossless() -> Self {
        Self::new(
            Mat::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]),
            Mat::column(&[0.0, 1.0]),
            Mat::from_rows(&[&[0.0, 1.0]]),
            Mat::identity(2),
        )
        .expect("lossless fixture is passive")
    }

    /// `A'P + PA`
    pub fn dissipation_matrix(&self) -> Mat {
        contraction_matrix(&self.system, &self.storage, &[0.0; 2]).unwrap_or_else(|_| Mat::zeros(2, 2))
    }
}

/// Names accepted by [`lookup`].
pub const REGISTRY: [&str; 6] = ["osc-a", "osc-b", "osc-c", "rc", "rigid-body", "linear-fixture"];

/// A bundled system with everything needed to check and simulate it.
#[derive(Clone)]
pub struct RegisteredExample {
    pub name: &'static str,
    pub system: ControlAffineSystem,
    /// The storage the example is certified with.
    pub storage: QuadraticStorage,
    pub gradient: Option<GradientSystem>,
    /// Weight of the QPQ storage, for gradient systems.
    pub qpq_weight: Option<Mat>,
    /// Grid used when none is given.
    pub default_grid: SampleGrid,
    /// Input signal used when none is given.
    pub default_input: Vec<SignalExpr>,
    pub default_x0: Vec<f64>,
    /// Step size used when none is given. The RC conductance `v^5` is stiff
    /// for large `v`, so the circuit needs a finer step than the default.
    pub default_dt: f64,
    pub rigid_body: Option<RigidBody>,
}

impl core::fmt::Debug for RegisteredExample {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RegisteredExample").field("name", &self.name).finish_non_exhaustive()
    }
}

fn parse(s: &str) -> Vec<SignalExpr> {
    vec![SignalExpr::parse(s).expect("bundled signal parses")]
}

fn domain_grid(d: &Domain, count: usize) -> SampleGrid {
    SampleGrid::from_domain(d, count).expect("bundled domain is a box")
}

pub fn lookup(name: &str) -> Option<RegisteredExample> {
    let ex = match name {
        "osc-a" | "osc-b" => {
            let variant = if name == "osc-a" { OscillatorVariant::A } else { OscillatorVariant::B };
            let o = oscillator(variant);
            RegisteredExample {
                name: if name == "osc-a" { "osc-a" } else { "osc-b" },
                default_grid: domain_grid(&o.domain, 1001),
                system: o.system,
                storage: o.storage,
                gradient: None,
                qpq_weight: None,
                default_input: parse("1+0.5*sin(pi*t)"),
                default_x0: vec![0.0],
                default_dt: crate::simulate::DEFAULT_DT,
                rigid_body: None,
            }
        }
        "osc-c" => {
            let o = oscillator(OscillatorVariant::C);
            RegisteredExample {
                name: "osc-c",
                default_grid: domain_grid(&o.domain, 1001),
                system: o.system,
                storage: o.storage,
                gradient: o.gradient,
                qpq_weight: Some(Mat::scalar(1.0)),
                default_input: parse("1+0.5*sin(pi*t)"),
                default_x0: vec![0.0],
                default_dt: crate::simulate::DEFAULT_DT,
                rigid_body: None,
            }
        }
        "rc" => {
            let rc = rc_circuit();
            RegisteredExample {
                name: "rc",
                default_grid: SampleGrid::interval(0.0, 10.0, 1001).expect("valid interval"),
                system: rc.system,
                storage: rc.storage,
                gradient: Some(rc.gradient),
                qpq_weight: Some(Mat::scalar(1.0)),
                default_input: parse("2+sin(2*pi*t)"),
                default_x0: vec![0.5],
                default_dt: 1e-4,
                rigid_body: None,
            }
        }
        "rigid-body" => {
            let rb = RigidBody::default();
            let gs = rb.closed_loop();
            let d = SignalExpr::parse("3*sin(pi*t)").expect("bundled signal parses");
            RegisteredExample {
                name: "rigid-body",
                system: gradient_to_affine(&gs),
                storage: rb.storage(),
                gradient: Some(gs),
                qpq_weight: Some(rb.weight()),
                default_grid: SampleGrid::new(vec![-3.5, -0.25, -0.25], vec![3.5, 0.25, 0.25], vec![15, 11, 11])
                    .expect("valid box"),
                default_input: rb.tracking_input(&d).expect("default G is e1"),
                default_x0: vec![0.0, 0.1, 0.1],
                default_dt: crate::simulate::DEFAULT_DT,
                rigid_body: Some(rb),
            }
        }
        "linear-fixture" => {
            let lf = LinearFixture::bundled();
            RegisteredExample {
                name: "linear-fixture",
                system: lf.system,
                storage: lf.storage,
                gradient: None,
                qpq_weight: None,
                default_grid: SampleGrid::uniform(vec![-1.0, -1.0], vec![1.0, 1.0], 21).expect("valid box"),
                default_input: parse("sin(t)"),
                default_x0: vec![0.5, -0.5],
                default_dt: crate::simulate::DEFAULT_DT,
                rigid_body: None,
            }
        }
        _ => return None,
    };
    Some(ex)
}

/// Storage families a registered example can be checked with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageChoice {
    /// The certificate the example is bundled with: QPQ for gradient
    /// systems, the three general conditions otherwise.
    Default,
    /// The example's own storage under the three general conditions.
    Custom,
    /// Natural storage `M = Q` of the gradient form.
    Natural,
    /// `M = Q P Q` with the given or bundled weight.
    Qpq,
    /// Constant `M = P`.
    Constant,
}

/// Conditions that certify the example under a storage choice. `p`
/// overrides the weight for `Qpq` and `Constant`.
pub fn conditions_for(
    ex: &RegisteredExample,
    choice: StorageChoice,
    p: Option<&Mat>,
) -> Result<Vec<(String, Arc<dyn Condition>)>> {
    let mut out: Vec<(String, Arc<dyn Condition>)> = Vec::new();
    let three = |out: &mut Vec<(String, Arc<dyn Condition>)>, st: QuadraticStorage| {
        out.push((
            "metric-contraction".into(),
            Arc::new(MetricContraction {
                system: ex.system.clone(),
                storage: st.clone(),
            }),
        ));
        out.push((
            "killing".into(),
            Arc::new(Killing {
                system: ex.system.clone(),
                storage: st.clone(),
                u_basis: Vec::new(),
            }),
        ));
        out.push((
            "output-match".into(),
            Arc::new(OutputMatch {
                system: ex.system.clone(),
                storage: st,
            }),
        ));
    };
    let need_gradient = || {
        ex.gradient
            .clone()
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("{} has no gradient form", ex.name)))
    };
    match choice {
        StorageChoice::Default => match (&ex.gradient, &ex.qpq_weight) {
            (Some(_), Some(w)) => return conditions_for(ex, StorageChoice::Qpq, Some(p.unwrap_or(w))),
            _ => three(&mut out, ex.storage.clone()),
        },
        StorageChoice::Custom => three(&mut out, ex.storage.clone()),
        StorageChoice::Natural => {
            let gs = need_gradient()?;
            natural_storage(&gs)?;
            out.push(("gradient-natural".into(), Arc::new(GradientNatural { system: gs })));
        }
        StorageChoice::Qpq => {
            let gs = need_gradient()?;
            let w = p
                .cloned()
                .or_else(|| ex.qpq_weight.clone())
                .ok_or_else(|| Error::InvalidArgument("a weight P is required".into()))?;
            make_qpq_storage(&gs, &w)?;
            out.push((
                "theorem-qpq".into(),
                Arc::new(TheoremQpq {
                    system: gs.clone(),
                    weight: w.clone(),
                }),
            ));
            out.push((
                "qpq-output".into(),
                Arc::new(QpqOutput {
                    system: gs,
                    weight: w,
                    c: None,
                }),
            ));
            if let Some(rb) = &ex.rigid_body {
                out.push(("rigid-body".into(), Arc::new(rb.damping_condition(0.0))));
            }
        }
        StorageChoice::Constant => {
            let w = p
                .cloned()
                .unwrap_or_else(|| Mat::identity(ex.system.n()));
            three(&mut out, QuadraticStorage::constant(w)?);
        }
    }
    Ok(out)
}
