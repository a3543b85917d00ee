//! Negative-feedback interconnection `u1 = -y2 + v1`, `u2 = y1 + v2` and the
//! summed storage of the two subsystems.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::{dot, Mat};
use crate::model::{ControlAffineSystem, InputJacobian, JacobianMode, MatrixField, VectorField};
use crate::storage::{Definiteness, Provenance, QuadraticStorage};

/// Composite system on `(x1, x2)` with input `(v1, v2)` and output
/// `(y1, y2)`. Jacobians are assembled blockwise from the subsystems (or by
/// finite differences if either subsystem lacks analytic ones).
pub fn feedback(sys1: &ControlAffineSystem, sys2: &ControlAffineSystem) -> Result<ControlAffineSystem> {
    let (n1, m1, p1) = (sys1.n(), sys1.m(), sys1.p());
    let (n2, m2, p2) = (sys2.n(), sys2.m(), sys2.p());
    crate::model::check_dim("feedback: inputs of system 1 against outputs of system 2", m1, p2)?;
    crate::model::check_dim("feedback: inputs of system 2 against outputs of system 1", m2, p1)?;
    let n = n1 + n2;

    let (a, b) = (sys1.clone(), sys2.clone());
    let drift: VectorField = Arc::new(move |x| {
        crate::model::check_dim("state", n, x.len())?;
        let (x1, x2) = x.split_at(n1);
        let y1 = a.output(x1)?;
        let y2 = b.output(x2)?;
        let u1: Vec<f64> = y2.iter().map(|v| -v).collect();
        let mut out = a.rhs(x1, &u1)?;
        out.extend(b.rhs(x2, &y1)?);
        Ok(out)
    });

    let (a, b) = (sys1.clone(), sys2.clone());
    let input: MatrixField = Arc::new(move |x| {
        crate::model::check_dim("state", n, x.len())?;
        let (x1, x2) = x.split_at(n1);
        Ok(Mat::block_diag(&a.input_matrix(x1)?, &b.input_matrix(x2)?))
    });

    let (a, b) = (sys1.clone(), sys2.clone());
    let output: VectorField = Arc::new(move |x| {
        crate::model::check_dim("state", n, x.len())?;
        let (x1, x2) = x.split_at(n1);
        let mut y = a.output(x1)?;
        y.extend(b.output(x2)?);
        Ok(y)
    });

    let analytic =
        sys1.jacobian_mode() == JacobianMode::Analytic && sys2.jacobian_mode() == JacobianMode::Analytic;
    let jacobians = if analytic {
        let (a, b) = (sys1.clone(), sys2.clone());
        let jac_f: MatrixField = Arc::new(move |x| {
            crate::model::check_dim("state", n, x.len())?;
            let (x1, x2) = x.split_at(n1);
            let y1 = a.output(x1)?;
            let y2 = b.output(x2)?;
            let u1: Vec<f64> = y2.iter().map(|v| -v).collect();
            let mut j = Mat::zeros(n, n);
            j.set_block(0, 0, &a.drift_jacobian(x1)?.add(&a.input_jacobian(x1, &u1)?));
            j.set_block(0, n1, &a.input_matrix(x1)?.matmul(&b.output_jacobian(x2)?).scale(-1.0));
            j.set_block(n1, 0, &b.input_matrix(x2)?.matmul(&a.output_jacobian(x1)?));
            j.set_block(n1, n1, &b.drift_jacobian(x2)?.add(&b.input_jacobian(x2, &y1)?));
            Ok(j)
        });
        let (a, b) = (sys1.clone(), sys2.clone());
        let jac_gu: InputJacobian = Arc::new(move |x, v| {
            crate::model::check_dim("state", n, x.len())?;
            crate::model::check_dim("input", m1 + m2, v.len())?;
            let (x1, x2) = x.split_at(n1);
            let (v1, v2) = v.split_at(m1);
            Ok(Mat::block_diag(&a.input_jacobian(x1, v1)?, &b.input_jacobian(x2, v2)?))
        });
        let (a, b) = (sys1.clone(), sys2.clone());
        let jac_h: MatrixField = Arc::new(move |x| {
            crate::model::check_dim("state", n, x.len())?;
            let (x1, x2) = x.split_at(n1);
            Ok(Mat::block_diag(&a.output_jacobian(x1)?, &b.output_jacobian(x2)?))
        });
        Some((jac_f, jac_gu, jac_h))
    } else {
        None
    };

    let domain = match (sys1.domain(), sys2.domain()) {
        (Some(d1), Some(d2)) => Some(d1.product(d2)),
        _ => None,
    };
    Ok(ControlAffineSystem::from_parts(
        (n, m1 + m2, p1 + p2),
        drift,
        input,
        output,
        jacobians,
        domain,
    ))
}

/// `M(x1, x2) = diag(M1(x1), M2(x2))`
pub fn sum_storage(st1: &QuadraticStorage, st2: &QuadraticStorage) -> QuadraticStorage {
    let (n1, n2) = (st1.n(), st2.n());
    let n = n1 + n2;
    let (a, b) = (st1.clone(), st2.clone());
    let metric: MatrixField = Arc::new(move |x| {
        crate::model::check_dim("state", n, x.len())?;
        let (x1, x2) = x.split_at(n1);
        Ok(Mat::block_diag(&a.metric(x1)?, &b.metric(x2)?))
    });
    let (a, b) = (st1.clone(), st2.clone());
    let metric_derivative = Arc::new(move |x: &[f64]| -> Result<Vec<Mat>> {
        crate::model::check_dim("state", n, x.len())?;
        let (x1, x2) = x.split_at(n1);
        let mut out = Vec::with_capacity(n);
        for d in a.metric_derivative(x1)? {
            out.push(Mat::block_diag(&d, &Mat::zeros(n2, n2)));
        }
        for d in b.metric_derivative(x2)? {
            out.push(Mat::block_diag(&Mat::zeros(n1, n1), &d));
        }
        Ok(out)
    });
    let definiteness = if st1.definiteness() == Definiteness::PositiveDefinite
        && st2.definiteness() == Definiteness::PositiveDefinite
    {
        Definiteness::PositiveDefinite
    } else {
        Definiteness::PositiveSemidefinite
    };
    QuadraticStorage::from_fields(n, metric, Some(metric_derivative), definiteness, Provenance::Sum)
}

/// Supply rates of the composite at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplySplit {
    /// `dy1' du1 + dy2' du2` with the internal inputs `du1 = -dy2 + dv1`,
    /// `du2 = dy1 + dv2`.
    pub internal: f64,
    /// `dy1' dv1 + dy2' dv2`
    pub external: f64,
}

/// Splits the composite output variation `dy = (dy1, dy2)` and external
/// input variation `dv = (dv1, dv2)` into the two supply rates, which agree
/// because the coupling terms cancel.
pub fn supply_split(p1: usize, dy: &[f64], dv: &[f64]) -> Result<SupplySplit> {
    crate::model::check_dim("input and output variation", dy.len(), dv.len())?;
    let (dy1, dy2) = dy.split_at(p1);
    let (dv1, dv2) = dv.split_at(dy2.len());
    let du1: Vec<f64> = dy2.iter().zip(dv1).map(|(y, v)| -y + v).collect();
    let du2: Vec<f64> = dy1.iter().zip(dv2).map(|(y, v)| y + v).collect();
    Ok(SupplySplit {
        internal: dot(dy1, &du1) + dot(dy2, &du2),
        external: dot(dy1, dv1) + dot(dy2, dv2),
    })
}
