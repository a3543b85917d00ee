//! Variational dynamics and the prolonged system, plus the correction terms
//! that appear when a gradient system has a state-dependent metric.

use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::{axpy, Mat};
use crate::model::{ControlAffineSystem, GradientSystem};

/// Base state paired with its variation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongedState {
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
}

/// Right-hand side of the prolonged system at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongedRates {
    pub xdot: Vec<f64>,
    pub dxdot: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

/// `dx' = df/dx dx + d[g(x)u]/dx dx + g(x) du`
pub fn variational_rhs(sys: &ControlAffineSystem, x: &[f64], u: &[f64], dx: &[f64], du: &[f64]) -> Result<Vec<f64>> {
    let mut out = sys.drift_jacobian(x)?.mul_vec(dx);
    axpy(&mut out, 1.0, &sys.input_jacobian(x, u)?.mul_vec(dx));
    axpy(&mut out, 1.0, &sys.input_matrix(x)?.mul_vec(du));
    Ok(out)
}

pub fn prolonged_rhs(sys: &ControlAffineSystem, ps: &ProlongedState, u: &[f64], du: &[f64]) -> Result<ProlongedRates> {
    let xdot = sys.rhs(&ps.x, u)?;
    let dxdot = variational_rhs(sys, &ps.x, u, &ps.dx, du)?;
    let y = sys.output(&ps.x)?;
    let dy = sys.output_jacobian(&ps.x)?.mul_vec(&ps.dx);
    Ok(ProlongedRates { xdot, dxdot, y, dy })
}

/// `Gamma dx = -[sum_i dQ/dx_i dx_i] x'`
pub fn gamma_term(gs: &GradientSystem, x: &[f64], u: &[f64], dx: &[f64]) -> Result<Vec<f64>> {
    let xdot = gs.velocity(x, u)?;
    let dq = gs.metric_derivative(x)?;
    let n = gs.n();
    let mut acc = Mat::zeros(n, n);
    for (dqi, dxi) in dq.iter().zip(dx) {
        acc.axpy(*dxi, dqi);
    }
    Ok(acc.mul_vec(&xdot).into_iter().map(|v| -v).collect())
}

/// The matrix of the linear map `dx -> Gamma dx`, assembled column by column.
pub fn gamma_matrix(gs: &GradientSystem, x: &[f64], u: &[f64]) -> Result<Mat> {
    let n = gs.n();
    let xdot = gs.velocity(x, u)?;
    let dq = gs.metric_derivative(x)?;
    let mut out = Mat::zeros(n, n);
    for (i, dqi) in dq.iter().enumerate() {
        let col: Vec<f64> = dqi.mul_vec(&xdot).into_iter().map(|v| -v).collect();
        out.set_col(i, &col);
    }
    Ok(out)
}

/// `Omega = sum_i dQ/dx_i x'_i`
pub fn omega_term(gs: &GradientSystem, x: &[f64], u: &[f64]) -> Result<Mat> {
    let xdot = gs.velocity(x, u)?;
    let dq = gs.metric_derivative(x)?;
    let n = gs.n();
    let mut acc = Mat::zeros(n, n);
    for (dqi, vi) in dq.iter().zip(&xdot) {
        acc.axpy(*vi, dqi);
    }
    Ok(acc)
}
