use alloc::sync::Arc;
use alloc::vec::Vec;

use super::affine::check_dim;
use super::{GradientOutput, GradientSystem, MatrixField, MatrixFieldDerivative, VectorField};
use crate::error::Result;
use crate::linalg::{finite_diff_matrix_field, Mat, DEFAULT_H_SCALE};

/// Mixed-potential circuit model on `z = (f, e)`:
/// `Q(z) z' = dp/dz + B u` with `Q(z) = diag(-d2H*_f/df2, d2H*_e/de2)`.
///
/// The co-energy Hessians take only their own block of coordinates.
#[derive(Clone)]
pub struct BraytonMoserSystem {
    pub nf: usize,
    pub ne: usize,
    pub hess_hf: MatrixField,
    pub hess_he: MatrixField,
    /// Third derivatives of `H*_f` w.r.t. each flow coordinate.
    pub d_hess_hf: Option<MatrixFieldDerivative>,
    /// Third derivatives of `H*_e` w.r.t. each effort coordinate.
    pub d_hess_he: Option<MatrixFieldDerivative>,
    /// `dH*/dz`, used for the passivating output.
    pub grad_hstar: Option<VectorField>,
    pub grad_p: VectorField,
    pub hess_p: Option<MatrixField>,
    pub b: Mat,
}

/// Assembles the gradient form with `grad_V = -dp/dz` and output
/// `y = B' dq/dz` where `q = -H*_f + H*_e` (so `Q = d2q/dz2`).
pub fn brayton_to_gradient(bm: &BraytonMoserSystem) -> Result<GradientSystem> {
    let n = bm.nf + bm.ne;
    check_dim("Brayton-Moser B rows", n, bm.b.rows())?;
    let nf = bm.nf;
    let ne = bm.ne;

    let (hf, he) = (bm.hess_hf.clone(), bm.hess_he.clone());
    let metric: MatrixField = Arc::new(move |z| {
        check_dim("state", nf + ne, z.len())?;
        let a = hf(&z[..nf])?.scale(-1.0);
        let b = he(&z[nf..])?;
        check_dim("flow Hessian", nf, a.rows())?;
        check_dim("effort Hessian", ne, b.rows())?;
        Ok(Mat::block_diag(&a, &b))
    });

    let (hf, he) = (bm.hess_hf.clone(), bm.hess_he.clone());
    let (dhf, dhe) = (bm.d_hess_hf.clone(), bm.d_hess_he.clone());
    let metric_derivative: MatrixFieldDerivative = Arc::new(move |z| {
        check_dim("state", nf + ne, z.len())?;
        let df = match &dhf {
            Some(d) => d(&z[..nf])?,
            None => finite_diff_matrix_field(|w| hf(w), &z[..nf], DEFAULT_H_SCALE)?,
        };
        let de = match &dhe {
            Some(d) => d(&z[nf..])?,
            None => finite_diff_matrix_field(|w| he(w), &z[nf..], DEFAULT_H_SCALE)?,
        };
        check_dim("flow Hessian derivative count", nf, df.len())?;
        check_dim("effort Hessian derivative count", ne, de.len())?;
        let mut out = Vec::with_capacity(n);
        for d in df {
            out.push(Mat::block_diag(&d.scale(-1.0), &Mat::zeros(ne, ne)));
        }
        for d in de {
            out.push(Mat::block_diag(&Mat::zeros(nf, nf), &d));
        }
        Ok(out)
    });

    let gp = bm.grad_p.clone();
    let grad_v: VectorField = Arc::new(move |z| Ok(gp(z)?.into_iter().map(|v| -v).collect()));
    let hess_v = bm.hess_p.clone().map(|hp| -> MatrixField { Arc::new(move |z| Ok(hp(z)?.scale(-1.0))) });

    let output = match &bm.grad_hstar {
        Some(gh) => {
            let gh = gh.clone();
            let grad_q: VectorField = Arc::new(move |z| {
                let mut g = gh(z)?;
                check_dim("co-energy gradient", nf + ne, g.len())?;
                for v in g.iter_mut().take(nf) {
                    *v = -*v;
                }
                Ok(g)
            });
            GradientOutput::MetricPotential {
                grad_q,
                c: bm.b.transpose(),
            }
        }
        None => GradientOutput::InputTranspose,
    };

    GradientSystem::builder(bm.b.clone())
        .raw(metric, Some(metric_derivative), grad_v, hess_v, true)
        .output(output)
        .build()
}
