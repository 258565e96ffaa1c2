use ndarray::{Array2, ArrayView2};

use super::re_inner;
use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

#[derive(Clone, Debug)]
pub struct SolveOutcome<T: Real> {
    pub x: Array2<Cplx<T>>,
    /// `‖b − Mx_k‖ / ‖b‖` for k = 0..=iterations.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Conjugate residual iteration for a self-adjoint positive semidefinite
/// operator under the real inner product `Re⟨a, b⟩`. The residual norm is
/// nonincreasing at every step.
pub fn conjugate_residual<T: Real, F>(
    apply: F,
    b: ArrayView2<'_, Cplx<T>>,
    x0: Array2<Cplx<T>>,
    max_iters: usize,
    tol: f64,
) -> Result<SolveOutcome<T>>
where
    F: Fn(ArrayView2<'_, Cplx<T>>) -> Result<Array2<Cplx<T>>>,
{
    if x0.dim() != b.dim() {
        return Err(Error::shape("conjugate_residual", format!("x0 {:?} vs b {:?}", x0.dim(), b.dim())));
    }
    let b_norm = re_inner(b, b).sqrt();
    let mut x = x0;
    if b_norm == 0.0 {
        x.fill(Cplx::new(T::zero(), T::zero()));
        return Ok(SolveOutcome { x, residuals: vec![0.0], converged: true });
    }
    let mut r = &b - &apply(x.view())?;
    let mut ar = apply(r.view())?;
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = re_inner(r.view(), ar.view());
    let mut residuals = vec![re_inner(r.view(), r.view()).sqrt() / b_norm];
    for _ in 0..max_iters {
        if *residuals.last().unwrap() <= tol {
            break;
        }
        let apap = re_inner(ap.view(), ap.view());
        if !(apap > 0.0) || !(rar > 0.0) {
            break;
        }
        let alpha = T::lit(rar / apap);
        x.zip_mut_with(&p, |xv, &pv| *xv = *xv + pv * alpha);
        r.zip_mut_with(&ap, |rv, &av| *rv = *rv - av * alpha);
        ar = apply(r.view())?;
        let rar_next = re_inner(r.view(), ar.view());
        let beta = T::lit(rar_next / rar);
        rar = rar_next;
        p.zip_mut_with(&r, |pv, &rv| *pv = rv + *pv * beta);
        ap.zip_mut_with(&ar, |av, &arv| *av = arv + *av * beta);
        let res = re_inner(r.view(), r.view()).sqrt() / b_norm;
        if !res.is_finite() {
            return Err(Error::NonFinite("conjugate residual".into()));
        }
        residuals.push(res);
    }
    let converged = *residuals.last().unwrap() <= tol;
    Ok(SolveOutcome { x, residuals, converged })
}
