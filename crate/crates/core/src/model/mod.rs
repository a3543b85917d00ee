//! System definitions: control-affine systems `x' = f(x) + g(x) u, y = h(x)`,
//! gradient systems `Q(x) x' = -dV/dx + B u`, Brayton-Moser circuit models,
//! and the conversions between them.

mod affine;
mod brayton;
mod gradient;
mod validate;

pub use affine::{ControlAffineBuilder, ControlAffineSystem, Domain, JacobianMode};
pub use brayton::{brayton_to_gradient, BraytonMoserSystem};
pub use gradient::{gradient_to_affine, GradientOutput, GradientSystem, GradientSystemBuilder};
pub use validate::{validate_model, ValidationReport, VALIDATION_TOL};

pub(crate) use affine::check_dim;

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::Mat;

pub type VectorField = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64]) -> Result<Mat> + Send + Sync>;
/// Partial derivatives of a matrix field, one matrix per state coordinate.
pub type MatrixFieldDerivative = Arc<dyn Fn(&[f64]) -> Result<Vec<Mat>> + Send + Sync>;
/// `(x, u) -> d[g(x) u]/dx`
pub type InputJacobian = Arc<dyn Fn(&[f64], &[f64]) -> Result<Mat> + Send + Sync>;

pub fn vector_field<F>(f: F) -> VectorField
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    Arc::new(move |x| Ok(f(x)))
}

pub fn matrix_field<F>(f: F) -> MatrixField
where
    F: Fn(&[f64]) -> Mat + Send + Sync + 'static,
{
    Arc::new(move |x| Ok(f(x)))
}

pub fn matrix_field_derivative<F>(f: F) -> MatrixFieldDerivative
where
    F: Fn(&[f64]) -> Vec<Mat> + Send + Sync + 'static,
{
    Arc::new(move |x| Ok(f(x)))
}

pub fn constant_matrix_field(m: Mat) -> MatrixField {
    Arc::new(move |_| Ok(m.clone()))
}

pub fn zero_matrix_field_derivative(n: usize, rows: usize, cols: usize) -> MatrixFieldDerivative {
    Arc::new(move |_| Ok((0..n).map(|_| Mat::zeros(rows, cols)).collect()))
}
