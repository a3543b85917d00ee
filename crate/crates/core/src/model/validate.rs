use alloc::vec::Vec;

use super::{ControlAffineSystem, JacobianMode};
use crate::error::{Error, Result};
use crate::linalg::{finite_diff_jacobian, Mat};

/// Relative mismatch accepted between analytic and finite-difference Jacobians.
pub const VALIDATION_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Max relative mismatch of `df/dx` over the sample points.
    pub drift: f64,
    /// Max relative mismatch of `d[g(x)u]/dx`.
    pub input: f64,
    /// Max relative mismatch of `dh/dx`.
    pub output: f64,
    /// Sample index and error for points where an evaluator failed.
    pub failures: Vec<(usize, Error)>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn worst(&self) -> f64 {
        self.drift.max(self.input).max(self.output)
    }
}

fn relative_mismatch(analytic: &Mat, reference: &Mat) -> f64 {
    analytic.sub(reference).max_abs() / reference.max_abs().max(1.0)
}

/// Compares declared Jacobians against central differences at `(x, u)`
/// samples. In finite-difference mode the comparison is vacuous.
pub fn validate_model(sys: &ControlAffineSystem, samples: &[(Vec<f64>, Vec<f64>)]) -> ValidationReport {
    let mut report = ValidationReport {
        drift: 0.0,
        input: 0.0,
        output: 0.0,
        failures: Vec::new(),
        tolerance: VALIDATION_TOL,
        passed: true,
    };
    if sys.jacobian_mode() == JacobianMode::FiniteDifference {
        return report;
    }
    let h = sys.h_scale();
    for (k, (x, u)) in samples.iter().enumerate() {
        let point = || -> Result<(f64, f64, f64)> {
            let jf = sys.drift_jacobian(x)?;
            let jf_fd = finite_diff_jacobian(|z| sys.drift(z), x, h)?;
            let jg = sys.input_jacobian(x, u)?;
            let jg_fd = finite_diff_jacobian(|z| Ok(sys.input_matrix(z)?.mul_vec(u)), x, h)?;
            let jh = sys.output_jacobian(x)?;
            let jh_fd = finite_diff_jacobian(|z| sys.output(z), x, h)?;
            Ok((
                relative_mismatch(&jf, &jf_fd),
                relative_mismatch(&jg, &jg_fd),
                relative_mismatch(&jh, &jh_fd),
            ))
        };
        match point() {
            Ok((a, b, c)) => {
                report.drift = report.drift.max(a);
                report.input = report.input.max(b);
                report.output = report.output.max(c);
            }
            Err(e) => report.failures.push((k, e)),
        }
    }
    report.passed = report.failures.is_empty() && report.worst() <= VALIDATION_TOL;
    report
}
