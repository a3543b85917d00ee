//! Quadratic differential storages `dS = 1/2 dx' M(x) dx`.
//!
//! The factor 1/2 is the canonical normalization throughout; storages written
//! as `M(x) dx^2` differ by a uniform scale that does not change any sign
//! condition.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, finite_diff_matrix_field, sym_eig_bounds, Mat, DEFAULT_H_SCALE};
use crate::model::{
    constant_matrix_field, zero_matrix_field_derivative, ControlAffineSystem, Domain, GradientSystem, MatrixField,
    MatrixFieldDerivative,
};
use crate::prolong::variational_rhs;

/// Tolerance used when classifying the weight matrix of a QPQ storage.
pub const P_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ConstantP,
    NaturalQ,
    Qpq,
    Custom,
    Sum,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::ConstantP => "constant-P",
            Provenance::NaturalQ => "natural-Q",
            Provenance::Qpq => "QPQ",
            Provenance::Custom => "custom",
            Provenance::Sum => "sum",
        }
    }
}

#[derive(Clone)]
pub struct QuadraticStorage {
    n: usize,
    metric: MatrixField,
    metric_derivative: Option<MatrixFieldDerivative>,
    definiteness: Definiteness,
    provenance: Provenance,
}

impl core::fmt::Debug for QuadraticStorage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("QuadraticStorage")
            .field("n", &self.n)
            .field("definiteness", &self.definiteness)
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

impl QuadraticStorage {
    /// `M(x) = P`. Fails with `InvalidP` unless `P` is symmetric PSD.
    pub fn constant(p: Mat) -> Result<Self> {
        let definiteness = classify_weight(&p)?;
        let n = p.rows();
        Ok(Self {
            n,
            metric: constant_matrix_field(p),
            metric_derivative: Some(zero_matrix_field_derivative(n, n, n)),
            definiteness,
            provenance: Provenance::ConstantP,
        })
    }

    /// A user-supplied metric field. `dm` may be omitted, in which case
    /// central differences of `m` are used.
    pub fn custom(n: usize, m: MatrixField, dm: Option<MatrixFieldDerivative>, definiteness: Definiteness) -> Self {
        Self {
            n,
            metric: m,
            metric_derivative: dm,
            definiteness,
            provenance: Provenance::Custom,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn definiteness(&self) -> Definiteness {
        self.definiteness
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn metric(&self, x: &[f64]) -> Result<Mat> {
        crate::model::check_dim("state", self.n, x.len())?;
        let m = (self.metric)(x).map_err(|e| e.at(x))?;
        crate::model::check_dim("storage metric", self.n, m.rows())?;
        Ok(m)
    }

    pub fn metric_derivative(&self, x: &[f64]) -> Result<Vec<Mat>> {
        match &self.metric_derivative {
            Some(d) => {
                crate::model::check_dim("state", self.n, x.len())?;
                let d = d(x).map_err(|e| e.at(x))?;
                crate::model::check_dim("storage metric derivative count", self.n, d.len())?;
                Ok(d)
            }
            None => finite_diff_matrix_field(|z| self.metric(z), x, DEFAULT_H_SCALE),
        }
    }

    /// `c M(x)`, used to check that verdicts are invariant under rescaling.
    pub fn scaled(&self, c: f64) -> Self {
        let m = self.metric.clone();
        let m2 = self.metric.clone();
        let dm = self.metric_derivative.clone();
        let n = self.n;
        Self {
            n,
            metric: Arc::new(move |x| Ok(m2(x)?.scale(c))),
            metric_derivative: Some(Arc::new(move |x| match &dm {
                Some(d) => Ok(d(x)?.into_iter().map(|a| a.scale(c)).collect()),
                None => finite_diff_matrix_field(|z| Ok(m(z)?.scale(c)), x, DEFAULT_H_SCALE),
            })),
            definiteness: self.definiteness,
            provenance: self.provenance,
        }
    }

    /// Spot-checks symmetry (to 1e-10) and the declared definiteness at the
    /// given points.
    pub fn spot_check(&self, points: &[Vec<f64>]) -> Result<()> {
        for x in points {
            let m = self.metric(x)?;
            if m.asymmetry() > 1e-10 * m.frobenius().max(1.0) {
                return Err(Error::InvalidArgument(alloc::format!("M(x) is not symmetric at x = {x:?}")));
            }
            let eig = sym_eig_bounds(&m, 1e-12)?;
            let ok = match self.definiteness {
                Definiteness::PositiveDefinite => eig.min > 0.0,
                Definiteness::PositiveSemidefinite => eig.min >= -P_TOL,
            };
            if !ok {
                return Err(Error::NotAMetric {
                    at: x.clone(),
                    min_eigenvalue: eig.min,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn from_fields(
        n: usize,
        metric: MatrixField,
        metric_derivative: Option<MatrixFieldDerivative>,
        definiteness: Definiteness,
        provenance: Provenance,
    ) -> Self {
        Self {
            n,
            metric,
            metric_derivative,
            definiteness,
            provenance,
        }
    }
}

fn classify_weight(p: &Mat) -> Result<Definiteness> {
    let eig = sym_eig_bounds(p, 1e-14)?;
    if eig.asymmetry > P_TOL || eig.min < -P_TOL {
        return Err(Error::InvalidP {
            min_eigenvalue: eig.min,
            asymmetry: eig.asymmetry,
        });
    }
    Ok(if eig.min > P_TOL {
        Definiteness::PositiveDefinite
    } else {
        Definiteness::PositiveSemidefinite
    })
}

/// `1/2 dx' M(x) dx`
pub fn eval_storage(st: &QuadraticStorage, x: &[f64], dx: &[f64]) -> Result<f64> {
    crate::model::check_dim("variation", st.n, dx.len())?;
    let v = 0.5 * st.metric(x)?.quad_form(dx);
    if !v.is_finite() {
        return Err(Error::NonFinite { context: "storage value" });
    }
    Ok(v)
}

/// Time derivative of the storage along the prolonged flow:
/// `dx' M dx_dot + 1/2 sum_i (dx' dM_i dx) x_dot_i`.
pub fn storage_rate(
    st: &QuadraticStorage,
    sys: &ControlAffineSystem,
    x: &[f64],
    u: &[f64],
    dx: &[f64],
    du: &[f64],
) -> Result<f64> {
    let m = st.metric(x)?;
    let dm = st.metric_derivative(x)?;
    let xdot = sys.rhs(x, u)?;
    let dxdot = variational_rhs(sys, x, u, dx, du)?;
    let mut rate = dot(dx, &m.mul_vec(&dxdot));
    for (dmi, vi) in dm.iter().zip(&xdot) {
        rate += 0.5 * dmi.quad_form(dx) * vi;
    }
    if !rate.is_finite() {
        return Err(Error::NonFinite { context: "storage rate" });
    }
    Ok(rate)
}

/// `M(x) = Q(x) P Q(x)`, `dM_i = dQ_i P Q + Q P dQ_i`.
pub fn make_qpq_storage(gs: &GradientSystem, p: &Mat) -> Result<QuadraticStorage> {
    crate::model::check_dim("P dimension", gs.n(), p.rows())?;
    let definiteness = classify_weight(p)?;
    let gs1 = gs.clone();
    let p1 = p.clone();
    let metric: MatrixField = Arc::new(move |x| {
        let q = gs1.metric(x)?;
        Ok(q.matmul(&p1).matmul(&q))
    });
    let gs2 = gs.clone();
    let p2 = p.clone();
    let metric_derivative: MatrixFieldDerivative = Arc::new(move |x| {
        let q = gs2.metric(x)?;
        let qp = q.matmul(&p2);
        let pq = p2.matmul(&q);
        Ok(gs2
            .metric_derivative(x)?
            .iter()
            .map(|dq| dq.matmul(&pq).add(&qp.matmul(dq)))
            .collect())
    });
    Ok(QuadraticStorage::from_fields(
        gs.n(),
        metric,
        Some(metric_derivative),
        definiteness,
        Provenance::Qpq,
    ))
}

/// Number of samples per axis used to check `Q > 0` on the declared domain.
const NATURAL_SAMPLES_PER_AXIS: usize = 21;

/// `M(x) = Q(x)`. Requires `Q` positive definite on the declared domain
/// (at the origin when no domain is declared).
pub fn natural_storage(gs: &GradientSystem) -> Result<QuadraticStorage> {
    let points = match gs.domain() {
        Some(d) => domain_samples(d, NATURAL_SAMPLES_PER_AXIS, 4096),
        None => alloc::vec![alloc::vec![0.0; gs.n()]],
    };
    for x in &points {
        let q = gs.metric(x)?;
        let eig = sym_eig_bounds(&q, 1e-12)?;
        if eig.min <= 0.0 {
            return Err(Error::NotAMetric {
                at: x.clone(),
                min_eigenvalue: eig.min,
            });
        }
    }
    let g1 = gs.clone();
    let g2 = gs.clone();
    Ok(QuadraticStorage::from_fields(
        gs.n(),
        Arc::new(move |x| g1.metric(x)),
        Some(Arc::new(move |x| g2.metric_derivative(x))),
        Definiteness::PositiveDefinite,
        Provenance::NaturalQ,
    ))
}

/// Tensor grid over a box, reducing the per-axis count until the total stays
/// under `max_points`.
pub(crate) fn domain_samples(d: &Domain, per_axis: usize, max_points: usize) -> Vec<Vec<f64>> {
    let n = d.dim();
    let mut k = per_axis.max(2);
    while k > 2 && k.checked_pow(n as u32).map_or(true, |t| t > max_points) {
        k -= 1;
    }
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|axis| {
                    let j = idx % k;
                    idx /= k;
                    let (lo, hi) = (d.lower()[axis], d.upper()[axis]);
                    lo + (hi - lo) * j as f64 / (k - 1) as f64
                })
                .collect()
        })
        .collect()
}
