use alloc::sync::Arc;
use alloc::vec::Vec;

use super::affine::{check_dim, check_shape};
use super::{
    matrix_field, matrix_field_derivative, vector_field, ControlAffineSystem, Domain, InputJacobian, MatrixField,
    MatrixFieldDerivative, VectorField,
};
use crate::error::{Error, Result};
use crate::linalg::{finite_diff_jacobian, finite_diff_matrix_field, Lu, Mat, DEFAULT_H_SCALE};

/// Output map attached to a gradient system.
#[derive(Clone)]
pub enum GradientOutput {
    /// `y = B' x`
    InputTranspose,
    /// `y = C dq/dx` where the metric is assumed to be the Hessian of `q`.
    /// The Jacobian is taken as `C Q(x)`; integrability of `Q` is not checked.
    MetricPotential { grad_q: VectorField, c: Mat },
}

impl core::fmt::Debug for GradientOutput {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GradientOutput::InputTranspose => f.write_str("InputTranspose"),
            GradientOutput::MetricPotential { c, .. } => f.debug_struct("MetricPotential").field("c", c).finish(),
        }
    }
}

/// `Q(x) x' = -grad_V(x) + B u`.
///
/// `Q` must be symmetric and invertible but may be indefinite. When the
/// system is built from a general field `A(x)` (`Q x' = A(x) + B u`) the
/// stored force is `-A` and its Jacobian `-dA/dx`, so that one sign
/// convention holds everywhere.
#[derive(Clone)]
pub struct GradientSystem {
    n: usize,
    m: usize,
    metric: MatrixField,
    metric_derivative: Option<MatrixFieldDerivative>,
    grad_v: VectorField,
    hess_v: Option<MatrixField>,
    potential: bool,
    b: Mat,
    output: GradientOutput,
    domain: Option<Domain>,
}

impl core::fmt::Debug for GradientSystem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GradientSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("b", &self.b)
            .field("potential", &self.potential)
            .field("output", &self.output)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl GradientSystem {
    pub fn builder(b: Mat) -> GradientSystemBuilder {
        GradientSystemBuilder {
            b,
            metric: None,
            metric_derivative: None,
            grad_v: None,
            hess_v: None,
            potential: true,
            output: GradientOutput::InputTranspose,
            domain: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn input_matrix(&self) -> &Mat {
        &self.b
    }

    pub fn is_potential(&self) -> bool {
        self.potential
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn output(&self) -> &GradientOutput {
        &self.output
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.metric_derivative.is_some() && self.hess_v.is_some()
    }

    pub fn with_output(mut self, output: GradientOutput) -> Self {
        self.output = output;
        self
    }

    pub fn with_domain(mut self, domain: Option<Domain>) -> Self {
        self.domain = domain;
        self
    }

    /// `Q(x)`
    pub fn metric(&self, x: &[f64]) -> Result<Mat> {
        check_dim("state", self.n, x.len())?;
        let q = (self.metric)(x).map_err(|e| e.at(x))?;
        check_shape("metric", &q, self.n, self.n)?;
        Ok(q)
    }

    /// `dQ/dx_i` for every coordinate, analytic when declared.
    pub fn metric_derivative(&self, x: &[f64]) -> Result<Vec<Mat>> {
        let d = match &self.metric_derivative {
            Some(dq) => {
                check_dim("state", self.n, x.len())?;
                dq(x).map_err(|e| e.at(x))?
            }
            None => finite_diff_matrix_field(|z| self.metric(z), x, DEFAULT_H_SCALE)?,
        };
        check_dim("metric derivative count", self.n, d.len())?;
        for m in &d {
            check_shape("metric derivative", m, self.n, self.n)?;
        }
        Ok(d)
    }

    /// `dV/dx` (or `-A(x)` for non-potential systems).
    pub fn grad_potential(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.n, x.len())?;
        let g = (self.grad_v)(x).map_err(|e| e.at(x))?;
        check_dim("potential gradient", self.n, g.len())?;
        Ok(g)
    }

    /// `d^2V/dx^2` (or `-dA/dx`).
    pub fn hess_potential(&self, x: &[f64]) -> Result<Mat> {
        let h = match &self.hess_v {
            Some(h) => {
                check_dim("state", self.n, x.len())?;
                h(x).map_err(|e| e.at(x))?
            }
            None => finite_diff_jacobian(|z| self.grad_potential(z), x, DEFAULT_H_SCALE)?,
        };
        check_shape("potential hessian", &h, self.n, self.n)?;
        Ok(h)
    }

    pub(crate) fn metric_lu(&self, x: &[f64]) -> Result<(Mat, Lu)> {
        let q = self.metric(x)?;
        let lu = Lu::factor(&q).map_err(|e| e.at(x))?;
        Ok((q, lu))
    }

    /// `x' = Q(x)^-1 (-grad_V(x) + B u)`
    pub fn velocity(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim("input", self.m, u.len())?;
        let (_, lu) = self.metric_lu(x)?;
        let mut rhs = self.b.mul_vec(u);
        crate::linalg::axpy(&mut rhs, -1.0, &self.grad_potential(x)?);
        Ok(lu.solve(&rhs))
    }

    /// Checks the symmetry invariants of `Q` (to 1e-10) and, for potential
    /// systems, of the Hessian (to 1e-8) at the given points. Returns the
    /// largest condition number of `Q` seen.
    pub fn spot_check(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst_cond: f64 = 0.0;
        for x in points {
            let q = self.metric(x)?;
            if q.asymmetry() > 1e-10 * q.frobenius().max(1.0) {
                return Err(Error::InvalidArgument(alloc::format!("Q(x) is not symmetric at x = {x:?}")));
            }
            let lu = Lu::factor(&q).map_err(|e| e.at(x))?;
            worst_cond = worst_cond.max(q.norm1() * lu.inverse().norm1());
            if self.potential {
                let h = self.hess_potential(x)?;
                if h.asymmetry() > 1e-8 * h.frobenius().max(1.0) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "potential Hessian is not symmetric at x = {x:?}"
                    )));
                }
            }
        }
        Ok(worst_cond)
    }
}

pub struct GradientSystemBuilder {
    b: Mat,
    metric: Option<MatrixField>,
    metric_derivative: Option<MatrixFieldDerivative>,
    grad_v: Option<VectorField>,
    hess_v: Option<MatrixField>,
    potential: bool,
    output: GradientOutput,
    domain: Option<Domain>,
}

impl GradientSystemBuilder {
    pub fn metric(mut self, q: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.metric = Some(matrix_field(q));
        self
    }

    pub fn metric_derivative(mut self, dq: impl Fn(&[f64]) -> Vec<Mat> + Send + Sync + 'static) -> Self {
        self.metric_derivative = Some(matrix_field_derivative(dq));
        self
    }

    pub fn constant_metric(mut self, q: Mat) -> Self {
        let n = q.rows();
        self.metric = Some(super::constant_matrix_field(q));
        self.metric_derivative = Some(super::zero_matrix_field_derivative(n, n, n));
        self
    }

    /// Potential force: `grad_V` and optionally its Hessian.
    pub fn potential(
        mut self,
        grad_v: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hess_v: Option<MatrixField>,
    ) -> Self {
        self.grad_v = Some(vector_field(grad_v));
        self.hess_v = hess_v;
        self.potential = true;
        self
    }

    /// General field `Q x' = A(x) + B u`, stored as `grad_V = -A`.
    pub fn field(
        mut self,
        a: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jac_a: Option<MatrixField>,
    ) -> Self {
        self.grad_v = Some(vector_field(move |x| a(x).into_iter().map(|v| -v).collect()));
        self.hess_v = jac_a.map(|j| -> MatrixField { Arc::new(move |x| Ok(j(x)?.scale(-1.0))) });
        self.potential = false;
        self
    }

    pub(crate) fn raw(
        mut self,
        metric: MatrixField,
        metric_derivative: Option<MatrixFieldDerivative>,
        grad_v: VectorField,
        hess_v: Option<MatrixField>,
        potential: bool,
    ) -> Self {
        self.metric = Some(metric);
        self.metric_derivative = metric_derivative;
        self.grad_v = Some(grad_v);
        self.hess_v = hess_v;
        self.potential = potential;
        self
    }

    pub fn output(mut self, output: GradientOutput) -> Self {
        self.output = output;
        self
    }

    pub fn domain(mut self, domain: Domain) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn build(self) -> Result<GradientSystem> {
        let n = self.b.rows();
        let m = self.b.cols();
        let metric = self
            .metric
            .ok_or_else(|| Error::InvalidArgument("gradient system is missing Q(x)".into()))?;
        let grad_v = self
            .grad_v
            .ok_or_else(|| Error::InvalidArgument("gradient system is missing its force field".into()))?;
        if let GradientOutput::MetricPotential { c, .. } = &self.output {
            check_dim("output matrix cols", n, c.cols())?;
        }
        if let Some(d) = &self.domain {
            check_dim("domain", n, d.dim())?;
        }
        Ok(GradientSystem {
            n,
            m,
            metric,
            metric_derivative: self.metric_derivative,
            grad_v,
            hess_v: self.hess_v,
            potential: self.potential,
            b: self.b,
            output: self.output,
            domain: self.domain,
        })
    }
}

/// Rewrites `Q x' = -grad_V + B u` as `x' = f(x) + g(x) u` with
/// `Q f = -grad_V` and `Q g = B`, solved pointwise.
///
/// Jacobians use `d(Q^-1)/dx_i = -Q^-1 dQ_i Q^-1`, so no nested finite
/// differences are taken.
pub fn gradient_to_affine(gs: &GradientSystem) -> ControlAffineSystem {
    let gs = Arc::new(gs.clone());
    let n = gs.n;

    let s = gs.clone();
    let drift: VectorField = Arc::new(move |x| {
        let (_, lu) = s.metric_lu(x)?;
        let g = s.grad_potential(x)?;
        Ok(lu.solve(&g).into_iter().map(|v| -v).collect())
    });
    let s = gs.clone();
    let input: MatrixField = Arc::new(move |x| {
        let (_, lu) = s.metric_lu(x)?;
        Ok(lu.solve_mat(&s.b))
    });
    let s = gs.clone();
    let output: VectorField = Arc::new(move |x| match &s.output {
        GradientOutput::InputTranspose => Ok(s.b.tr_mul_vec(x)),
        GradientOutput::MetricPotential { grad_q, c } => Ok(c.mul_vec(&grad_q(x)?)),
    });

    let s = gs.clone();
    let drift_jac: MatrixField = Arc::new(move |x| {
        let (_, lu) = s.metric_lu(x)?;
        let f: Vec<f64> = lu.solve(&s.grad_potential(x)?).into_iter().map(|v| -v).collect();
        let dq = s.metric_derivative(x)?;
        let mut rhs = s.hess_potential(x)?.scale(-1.0);
        for (i, dqi) in dq.iter().enumerate() {
            let col = dqi.mul_vec(&f);
            for r in 0..n {
                rhs[(r, i)] -= col[r];
            }
        }
        Ok(lu.solve_mat(&rhs))
    });
    let s = gs.clone();
    let input_jac: InputJacobian = Arc::new(move |x, u| {
        let (_, lu) = s.metric_lu(x)?;
        let gu = lu.solve(&s.b.mul_vec(u));
        let dq = s.metric_derivative(x)?;
        let mut rhs = Mat::zeros(n, n);
        for (i, dqi) in dq.iter().enumerate() {
            rhs.set_col(i, &dqi.mul_vec(&gu));
        }
        Ok(lu.solve_mat(&rhs).scale(-1.0))
    });
    let s = gs.clone();
    let output_jac: MatrixField = Arc::new(move |x| match &s.output {
        GradientOutput::InputTranspose => Ok(s.b.transpose()),
        GradientOutput::MetricPotential { c, .. } => Ok(c.matmul(&s.metric(x)?)),
    });

    let p = match &gs.output {
        GradientOutput::InputTranspose => gs.m,
        GradientOutput::MetricPotential { c, .. } => c.rows(),
    };
    let jacobians = gs
        .has_analytic_derivatives()
        .then_some((drift_jac, input_jac, output_jac));
    ControlAffineSystem::from_parts((n, gs.m, p), drift, input, output, jacobians, gs.domain.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn pendulum_gradient() -> GradientSystem {
        GradientSystem::builder(Mat::scalar(1.0))
            .constant_metric(Mat::scalar(1.0))
            .potential(|x| vec![libm::sin(x[0])], Some(matrix_field(|x| Mat::scalar(libm::cos(x[0])))))
            .build()
            .unwrap()
    }

    fn half_angle_gradient() -> GradientSystem {
        GradientSystem::builder(Mat::scalar(1.0))
            .metric(|x| Mat::scalar(1.0 / libm::cos(x[0] / 2.0)))
            .metric_derivative(|x| {
                let c = libm::cos(x[0] / 2.0);
                vec![Mat::scalar(0.5 * libm::sin(x[0] / 2.0) / (c * c))]
            })
            .potential(
                |x| vec![2.0 * libm::sin(x[0] / 2.0)],
                Some(matrix_field(|x| Mat::scalar(libm::cos(x[0] / 2.0)))),
            )
            .build()
            .unwrap()
    }

    #[test]
    fn pendulum_conversion() {
        let sys = gradient_to_affine(&pendulum_gradient());
        for x in [-1.0, 0.0, 0.7, 2.0] {
            assert!((sys.drift(&[x]).unwrap()[0] + libm::sin(x)).abs() < 1e-15);
            assert_eq!(sys.input_matrix(&[x]).unwrap()[(0, 0)], 1.0);
        }
    }

    #[test]
    fn half_angle_conversion() {
        let sys = gradient_to_affine(&half_angle_gradient());
        assert_eq!(sys.jacobian_mode(), super::super::JacobianMode::Analytic);
        for x in [-3.0, -1.0, 0.0, 0.5, PI / 2.0, 3.0] {
            let f = sys.drift(&[x]).unwrap()[0];
            assert!((f + libm::sin(x)).abs() < 1e-14, "{x}: {f}");
            let g = sys.input_matrix(&[x]).unwrap()[(0, 0)];
            assert!((g - libm::cos(x / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_potential_identity_metric() {
        let gs = GradientSystem::builder(Mat::identity(3))
            .constant_metric(Mat::identity(3))
            .potential(|_| vec![0.0; 3], Some(super::super::constant_matrix_field(Mat::zeros(3, 3))))
            .build()
            .unwrap();
        let sys = gradient_to_affine(&gs);
        assert_eq!(sys.drift(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(sys.input_matrix(&[1.0, 2.0, 3.0]).unwrap(), Mat::identity(3));
        assert_eq!(sys.output(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn singular_metric_reports_point() {
        let gs = GradientSystem::builder(Mat::scalar(1.0))
            .metric(|x| Mat::scalar(x[0]))
            .potential(|x| vec![x[0]], None)
            .build()
            .unwrap();
        let sys = gradient_to_affine(&gs);
        match sys.drift(&[0.0]) {
            Err(Error::SingularMatrix { at: Some(x) }) => assert_eq!(x, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn general_field_flips_sign() {
        let gs = GradientSystem::builder(Mat::scalar(1.0))
            .metric(|x| Mat::scalar(1.0 / (1.0 + x[0])))
            .field(
                |x| vec![-libm::pow(x[0], 5.0)],
                Some(matrix_field(|x| Mat::scalar(-5.0 * libm::pow(x[0], 4.0)))),
            )
            .build()
            .unwrap();
        assert!(!gs.is_potential());
        assert_eq!(gs.grad_potential(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(gs.hess_potential(&[1.0]).unwrap()[(0, 0)], 5.0);
        // v' = (1 + v)(-v^5 + i)
        assert_eq!(gs.velocity(&[1.0], &[3.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn spot_check_flags_asymmetric_metric() {
        let gs = GradientSystem::builder(Mat::identity(2))
            .metric(|_| Mat::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]))
            .potential(|x| x.to_vec(), None)
            .build()
            .unwrap();
        assert!(gs.spot_check(&[vec![0.0, 0.0]]).is_err());
        let cond = half_angle_gradient().spot_check(&[vec![0.0], vec![2.0]]).unwrap();
        assert!(cond >= 1.0);
    }
}
