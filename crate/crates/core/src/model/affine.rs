use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{matrix_field, vector_field, InputJacobian, MatrixField, VectorField};
use crate::error::{Error, Result};
use crate::linalg::{finite_diff_jacobian, Mat, DEFAULT_H_SCALE};

/// How the state Jacobians of a system are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

/// Closed axis-aligned box in the state chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "domain bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidArgument("domain lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::new(alloc::vec![lo], alloc::vec![hi]).expect("lo <= hi")
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Product of two boxes.
    pub fn product(&self, other: &Domain) -> Domain {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        Domain { lower, upper }
    }
}

/// `x' = f(x) + g(x) u`, `y = h(x)` with optional analytic Jacobians.
///
/// Evaluators must be pure; the system is shared freely between threads.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    p: usize,
    drift: VectorField,
    input: MatrixField,
    output: VectorField,
    drift_jac: Option<MatrixField>,
    input_jac: Option<InputJacobian>,
    output_jac: Option<MatrixField>,
    mode: JacobianMode,
    domain: Option<Domain>,
    h_scale: f64,
}

impl core::fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("p", &self.p)
            .field("mode", &self.mode)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    pub fn builder(n: usize, m: usize, p: usize) -> ControlAffineBuilder {
        ControlAffineBuilder {
            n,
            m,
            p,
            drift: None,
            input: None,
            output: None,
            drift_jac: None,
            input_jac: None,
            output_jac: None,
            domain: None,
        }
    }

    /// `x' = A x + B u`, `y = C x` with exact constant Jacobians.
    pub fn linear(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::NonSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        check_dim("B rows", n, b.rows())?;
        check_dim("C cols", n, c.cols())?;
        let (m, p) = (b.cols(), c.rows());
        let (a1, a2, b1, c1, c2) = (a.clone(), a, b.clone(), c.clone(), c);
        Self::builder(n, m, p)
            .drift(move |x| a1.mul_vec(x))
            .input_matrix(move |_| b1.clone())
            .output(move |x| c1.mul_vec(x))
            .drift_jacobian(move |_| a2.clone())
            .input_jacobian(move |_, _| Mat::zeros(n, n))
            .output_jacobian(move |_| c2.clone())
            .build()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn jacobian_mode(&self) -> JacobianMode {
        self.mode
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn with_domain(mut self, domain: Option<Domain>) -> Self {
        self.domain = domain;
        self
    }

    /// Forces every Jacobian through central differences.
    pub fn with_finite_differences(mut self) -> Self {
        self.mode = JacobianMode::FiniteDifference;
        self
    }

    pub fn h_scale(&self) -> f64 {
        self.h_scale
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.n, x.len())?;
        let f = (self.drift)(x).map_err(|e| e.at(x))?;
        check_dim("drift output", self.n, f.len())?;
        Ok(f)
    }

    pub fn input_matrix(&self, x: &[f64]) -> Result<Mat> {
        check_dim("state", self.n, x.len())?;
        let g = (self.input)(x).map_err(|e| e.at(x))?;
        check_dim("input matrix rows", self.n, g.rows())?;
        check_dim("input matrix cols", self.m, g.cols())?;
        Ok(g)
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.n, x.len())?;
        let y = (self.output)(x).map_err(|e| e.at(x))?;
        check_dim("output", self.p, y.len())?;
        Ok(y)
    }

    /// `f(x) + g(x) u`
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim("input", self.m, u.len())?;
        let mut v = self.drift(x)?;
        let gu = self.input_matrix(x)?.mul_vec(u);
        crate::linalg::axpy(&mut v, 1.0, &gu);
        Ok(v)
    }

    /// `df/dx`
    pub fn drift_jacobian(&self, x: &[f64]) -> Result<Mat> {
        let j = match (&self.drift_jac, self.mode) {
            (Some(jf), JacobianMode::Analytic) => {
                check_dim("state", self.n, x.len())?;
                jf(x).map_err(|e| e.at(x))?
            }
            _ => finite_diff_jacobian(|z| self.drift(z), x, self.h_scale)?,
        };
        check_shape("drift jacobian", &j, self.n, self.n)?;
        Ok(j)
    }

    /// `d[g(x) u]/dx`
    pub fn input_jacobian(&self, x: &[f64], u: &[f64]) -> Result<Mat> {
        check_dim("input", self.m, u.len())?;
        let j = match (&self.input_jac, self.mode) {
            (Some(jg), JacobianMode::Analytic) => {
                check_dim("state", self.n, x.len())?;
                jg(x, u).map_err(|e| e.at(x))?
            }
            _ => finite_diff_jacobian(|z| Ok(self.input_matrix(z)?.mul_vec(u)), x, self.h_scale)?,
        };
        check_shape("input jacobian", &j, self.n, self.n)?;
        Ok(j)
    }

    /// `dh/dx`
    pub fn output_jacobian(&self, x: &[f64]) -> Result<Mat> {
        let j = match (&self.output_jac, self.mode) {
            (Some(jh), JacobianMode::Analytic) => {
                check_dim("state", self.n, x.len())?;
                jh(x).map_err(|e| e.at(x))?
            }
            _ => finite_diff_jacobian(|z| self.output(z), x, self.h_scale)?,
        };
        check_shape("output jacobian", &j, self.p, self.n)?;
        Ok(j)
    }

    pub(crate) fn from_parts(
        (n, m, p): (usize, usize, usize),
        drift: VectorField,
        input: MatrixField,
        output: VectorField,
        jacobians: Option<(MatrixField, InputJacobian, MatrixField)>,
        domain: Option<Domain>,
    ) -> Self {
        let (mode, drift_jac, input_jac, output_jac) = match jacobians {
            Some((a, b, c)) => (JacobianMode::Analytic, Some(a), Some(b), Some(c)),
            None => (JacobianMode::FiniteDifference, None, None, None),
        };
        Self {
            n,
            m,
            p,
            drift,
            input,
            output,
            drift_jac,
            input_jac,
            output_jac,
            mode,
            domain,
            h_scale: DEFAULT_H_SCALE,
        }
    }

    /// Replaces the output map and its Jacobian.
    pub fn with_output<H, J>(mut self, p: usize, h: H, jac_h: Option<J>) -> Self
    where
        H: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        J: Fn(&[f64]) -> Mat + Send + Sync + 'static,
    {
        self.p = p;
        self.output = vector_field(h);
        self.output_jac = jac_h.map(matrix_field);
        if self.output_jac.is_none() {
            self.mode = JacobianMode::FiniteDifference;
        }
        self
    }

    /// Replaces the drift Jacobian without touching the drift itself; used to
    /// exercise model validation against deliberately wrong derivatives.
    pub fn with_drift_jacobian<J>(mut self, jac_f: J) -> Self
    where
        J: Fn(&[f64]) -> Mat + Send + Sync + 'static,
    {
        self.drift_jac = Some(matrix_field(jac_f));
        self
    }
}

pub struct ControlAffineBuilder {
    n: usize,
    m: usize,
    p: usize,
    drift: Option<VectorField>,
    input: Option<MatrixField>,
    output: Option<VectorField>,
    drift_jac: Option<MatrixField>,
    input_jac: Option<InputJacobian>,
    output_jac: Option<MatrixField>,
    domain: Option<Domain>,
}

impl ControlAffineBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.drift = Some(vector_field(f));
        self
    }

    pub fn input_matrix(mut self, g: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.input = Some(matrix_field(g));
        self
    }

    pub fn output(mut self, h: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.output = Some(vector_field(h));
        self
    }

    pub fn drift_jacobian(mut self, j: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.drift_jac = Some(matrix_field(j));
        self
    }

    pub fn input_jacobian(mut self, j: impl Fn(&[f64], &[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.input_jac = Some(Arc::new(move |x, u| Ok(j(x, u))));
        self
    }

    pub fn output_jacobian(mut self, j: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.output_jac = Some(matrix_field(j));
        self
    }

    pub fn try_drift(mut self, f: VectorField) -> Self {
        self.drift = Some(f);
        self
    }

    pub fn try_input_matrix(mut self, g: MatrixField) -> Self {
        self.input = Some(g);
        self
    }

    pub fn try_output(mut self, h: VectorField) -> Self {
        self.output = Some(h);
        self
    }

    pub fn domain(mut self, domain: Domain) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Analytic mode is selected only when all three Jacobians are supplied.
    pub fn build(self) -> Result<ControlAffineSystem> {
        let missing = |what: &str| Error::InvalidArgument(alloc::format!("control-affine system is missing {what}"));
        let drift = self.drift.ok_or_else(|| missing("a drift"))?;
        let input = self.input.ok_or_else(|| missing("an input matrix"))?;
        let output = self.output.ok_or_else(|| missing("an output map"))?;
        if let Some(d) = &self.domain {
            check_dim("domain", self.n, d.dim())?;
        }
        let mode = if self.drift_jac.is_some() && self.input_jac.is_some() && self.output_jac.is_some() {
            JacobianMode::Analytic
        } else {
            JacobianMode::FiniteDifference
        };
        Ok(ControlAffineSystem {
            n: self.n,
            m: self.m,
            p: self.p,
            drift,
            input,
            output,
            drift_jac: self.drift_jac,
            input_jac: self.input_jac,
            output_jac: self.output_jac,
            mode,
            domain: self.domain,
            h_scale: DEFAULT_H_SCALE,
        })
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}

pub(crate) fn check_shape(what: &'static str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    check_dim(what, rows, m.rows())?;
    check_dim(what, cols, m.cols())
}
