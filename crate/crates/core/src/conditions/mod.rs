//! Pointwise checkers for the differential-passivity conditions, plus grid
//! scanning and report aggregation.
//!
//! Every checker returns a raw value. Upper-bound conditions hold when the
//! value is at most the tolerance; lower-bound conditions (the QPQ margin)
//! hold when it is at least minus the tolerance. Reports normalize both so
//! that a margin `<= tol` means the condition holds.

mod scan;

pub use scan::{
    assemble_report, default_u_samples, evaluate_point, largest_certified_scale, scan_region, smallest_passing_parameter,
    trajectory_margin, ConditionReport, PointResult, SampleGrid, Verdict,
};

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_bounds, Mat};
use crate::model::{ControlAffineSystem, GradientOutput, GradientSystem};
use crate::prolong::{gamma_matrix, omega_term};
use crate::storage::QuadraticStorage;

/// Default tolerance for equality residuals.
pub const EQUALITY_TOL: f64 = 1e-8;
/// Default tolerance for eigenvalue margins.
pub const EIGENVALUE_TOL: f64 = 1e-9;

const EIG_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    Inequality,
    Equality,
}

impl ConditionKind {
    pub fn default_tolerance(self) -> f64 {
        match self {
            ConditionKind::Inequality => EIGENVALUE_TOL,
            ConditionKind::Equality => EQUALITY_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Holds when `value <= tol`.
    AtMost,
    /// Holds when `value >= -tol`.
    AtLeast,
}

impl Orientation {
    pub fn normalize(self, raw: f64) -> f64 {
        match self {
            Orientation::AtMost => raw,
            Orientation::AtLeast => -raw,
        }
    }
}

/// A pointwise condition that can be scanned over a grid.
pub trait Condition: Send + Sync {
    fn id(&self) -> String;
    fn kind(&self) -> ConditionKind;
    fn orientation(&self) -> Orientation {
        Orientation::AtMost
    }
    /// Input dimension when the value depends on `u`, `None` otherwise.
    fn input_dim(&self) -> Option<usize> {
        None
    }
    fn value(&self, x: &[f64], u: &[f64]) -> Result<f64>;
}

fn lambda_max(m: &Mat) -> Result<f64> {
    Ok(sym_eig_bounds(&m.symmetrized(), EIG_TOL)?.max)
}

fn lambda_min(m: &Mat) -> Result<f64> {
    Ok(sym_eig_bounds(&m.symmetrized(), EIG_TOL)?.min)
}

/// `M df/dx + df/dx' M + sum_i dM/dx_i f_i`
pub fn contraction_matrix(sys: &ControlAffineSystem, st: &QuadraticStorage, x: &[f64]) -> Result<Mat> {
    let m = st.metric(x)?;
    let jf = sys.drift_jacobian(x)?;
    let f = sys.drift(x)?;
    let mut out = m.matmul(&jf).plus_transpose();
    for (dmi, fi) in st.metric_derivative(x)?.iter().zip(&f) {
        out.axpy(*fi, dmi);
    }
    Ok(out)
}

/// Largest eigenvalue of the contraction matrix at `x`.
pub fn check_metric_contraction(sys: &ControlAffineSystem, st: &QuadraticStorage, x: &[f64]) -> Result<f64> {
    lambda_max(&contraction_matrix(sys, st, x)?)
}

/// Frobenius norm of the Lie derivative of `M` along `g(x) e` for each
/// `e` in `u_basis`. An empty basis means the standard basis.
pub fn check_killing(sys: &ControlAffineSystem, st: &QuadraticStorage, x: &[f64], u_basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m_dim = sys.m();
    let standard: Vec<Vec<f64>>;
    let basis = if u_basis.is_empty() {
        standard = (0..m_dim)
            .map(|j| (0..m_dim).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        &standard
    } else {
        u_basis
    };
    let m = st.metric(x)?;
    let dm = st.metric_derivative(x)?;
    let g = sys.input_matrix(x)?;
    basis
        .iter()
        .map(|e| {
            let jg = sys.input_jacobian(x, e)?;
            let ge = g.mul_vec(e);
            let mut lie = m.matmul(&jg).plus_transpose();
            for (dmi, gi) in dm.iter().zip(&ge) {
                lie.axpy(*gi, dmi);
            }
            Ok(lie.frobenius())
        })
        .collect()
}

/// `|| dh/dx' - M(x) g(x) ||_F`
pub fn check_output_match(sys: &ControlAffineSystem, st: &QuadraticStorage, x: &[f64]) -> Result<f64> {
    let jh = sys.output_jacobian(x)?;
    let mg = st.metric(x)?.matmul(&sys.input_matrix(x)?);
    if jh.cols() != mg.rows() || jh.rows() != mg.cols() {
        return Err(Error::DimensionMismatch {
            what: "output Jacobian against M g",
            expected: mg.cols(),
            found: jh.rows(),
        });
    }
    Ok(jh.transpose().sub(&mg).frobenius())
}

/// Twice the quadratic part of the natural-storage rate:
/// `-(H + H') + Gamma + Gamma' + Omega` with `H` the potential Hessian.
pub fn natural_storage_matrix(gs: &GradientSystem, x: &[f64], u: &[f64]) -> Result<Mat> {
    let h = gs.hess_potential(x)?;
    let gamma = gamma_matrix(gs, x, u)?;
    let omega = omega_term(gs, x, u)?;
    Ok(h.plus_transpose().scale(-1.0).add(&gamma.plus_transpose()).add(&omega))
}

/// Largest eigenvalue of [`natural_storage_matrix`]. Requires `Q(x) > 0`.
pub fn check_gradient_natural(gs: &GradientSystem, x: &[f64], u: &[f64]) -> Result<f64> {
    let q = gs.metric(x)?;
    let eig = sym_eig_bounds(&q, EIG_TOL)?;
    if eig.min <= 0.0 {
        return Err(Error::NotAMetric {
            at: x.to_vec(),
            min_eigenvalue: eig.min,
        });
    }
    lambda_max(&natural_storage_matrix(gs, x, u)?)
}

fn check_weight(p: &Mat) -> Result<()> {
    let eig = sym_eig_bounds(p, 1e-14)?;
    if eig.asymmetry > crate::storage::P_TOL || eig.min < -crate::storage::P_TOL {
        return Err(Error::InvalidP {
            min_eigenvalue: eig.min,
            asymmetry: eig.asymmetry,
        });
    }
    Ok(())
}

/// `Q P H + (Q P H)'` with `H` the potential Hessian (or `-dA/dx` for a
/// general field).
pub fn qpq_matrix(gs: &GradientSystem, p: &Mat, x: &[f64]) -> Result<Mat> {
    let q = gs.metric(x)?;
    let h = gs.hess_potential(x)?;
    Ok(q.matmul(p).matmul(&h).plus_transpose())
}

/// Returns `(lambda_min(QPH + (QPH)'), ||C' - P B||_F)`. The margin must be
/// nonnegative. Without `c` the output matrix of the system is used when it
/// has one, and `(P B)'` otherwise (residual 0).
pub fn check_theorem_qpq(gs: &GradientSystem, p: &Mat, x: &[f64], c: Option<&Mat>) -> Result<(f64, f64)> {
    check_weight(p)?;
    crate::model::check_dim("P dimension", gs.n(), p.rows())?;
    let margin = lambda_min(&qpq_matrix(gs, p, x)?)?;
    let pb = p.matmul(gs.input_matrix());
    let c = match c {
        Some(c) => Some(c.clone()),
        None => match gs.output() {
            GradientOutput::MetricPotential { c, .. } => Some(c.clone()),
            GradientOutput::InputTranspose => None,
        },
    };
    let residual = match c {
        Some(c) => {
            if c.cols() != pb.rows() || c.rows() != pb.cols() {
                return Err(Error::DimensionMismatch {
                    what: "output matrix against P B",
                    expected: pb.cols(),
                    found: c.rows(),
                });
            }
            c.transpose().sub(&pb).frobenius()
        }
        None => 0.0,
    };
    Ok((margin, residual))
}

/// Largest eigenvalue of `Q^-1 Hp + Hp Q^-1 - 2 diag(r)` for the closed-loop
/// rigid body, where `Hp` is the Hessian of `w1 w2 w3`.
pub fn check_rigid_body(gs_closed: &GradientSystem, r: &[f64], x: &[f64]) -> Result<f64> {
    crate::model::check_dim("damping gains", gs_closed.n(), r.len())?;
    crate::model::check_dim("angular velocity", 3, x.len())?;
    let (_, lu) = gs_closed.metric_lu(x)?;
    let qinv = lu.inverse();
    let hp = Mat::from_rows(&[&[0.0, x[2], x[1]], &[x[2], 0.0, x[0]], &[x[1], x[0], 0.0]]);
    let m = qinv.matmul(&hp).plus_transpose().sub(&Mat::from_diag(r).scale(2.0));
    lambda_max(&m)
}

/// Contraction condition as a scannable [`Condition`].
pub struct MetricContraction {
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
}

impl Condition for MetricContraction {
    fn id(&self) -> String {
        "metric-contraction".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Inequality
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        check_metric_contraction(&self.system, &self.storage, x)
    }
}

/// Killing condition; the value is the largest residual over the basis.
pub struct Killing {
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
    pub u_basis: Vec<Vec<f64>>,
}

impl Condition for Killing {
    fn id(&self) -> String {
        "killing".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Equality
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        Ok(check_killing(&self.system, &self.storage, x, &self.u_basis)?
            .into_iter()
            .fold(0.0, f64::max))
    }
}

pub struct OutputMatch {
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
}

impl Condition for OutputMatch {
    fn id(&self) -> String {
        "output-match".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Equality
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        check_output_match(&self.system, &self.storage, x)
    }
}

pub struct GradientNatural {
    pub system: GradientSystem,
}

impl Condition for GradientNatural {
    fn id(&self) -> String {
        "gradient-natural".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Inequality
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.system.m())
    }

    fn value(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        check_gradient_natural(&self.system, x, u)
    }
}

/// The QPQ margin. The output residual does not depend on `x`; see
/// [`check_theorem_qpq`].
pub struct TheoremQpq {
    pub system: GradientSystem,
    pub weight: Mat,
}

impl Condition for TheoremQpq {
    fn id(&self) -> String {
        "theorem-qpq".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Inequality
    }

    fn orientation(&self) -> Orientation {
        Orientation::AtLeast
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        Ok(check_theorem_qpq(&self.system, &self.weight, x, None)?.0)
    }
}

/// Output condition of the QPQ construction, `C' = P B`, as a constant
/// residual so it can be reported alongside the margin.
pub struct QpqOutput {
    pub system: GradientSystem,
    pub weight: Mat,
    pub c: Option<Mat>,
}

impl Condition for QpqOutput {
    fn id(&self) -> String {
        "qpq-output".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Equality
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        Ok(check_theorem_qpq(&self.system, &self.weight, x, self.c.as_ref())?.1)
    }
}

pub struct RigidBodyDamping {
    pub system: GradientSystem,
    pub damping: Vec<f64>,
}

impl Condition for RigidBodyDamping {
    fn id(&self) -> String {
        "rigid-body".into()
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Inequality
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        check_rigid_body(&self.system, &self.damping, x)
    }
}

/// Any closure as a condition.
pub struct FnCondition<F> {
    pub id: String,
    pub kind: ConditionKind,
    pub orientation: Orientation,
    pub f: F,
}

impl<F> Condition for FnCondition<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn kind(&self) -> ConditionKind {
        self.kind
    }

    fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn value(&self, x: &[f64], _u: &[f64]) -> Result<f64> {
        (self.f)(x)
    }
}
