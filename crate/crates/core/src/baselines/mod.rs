//! Classical factor reconstructions: regularized low-rank and a simplified
//! navigator-driven SToRM.

mod lowrank;
mod solve;
mod storm;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;

pub use lowrank::{lowrank_from_term, lowrank_recon, LowRankConfig};
pub use solve::{conjugate_residual, SolveOutcome};
pub use storm::{storm_from_term, storm_laplacian, storm_recon, GraphLaplacian, StormConfig};

use crate::error::{Error, Result};
use crate::mri::casorati;
use crate::phantom::ImageSeries;
use crate::scalar::{Cplx, Real};

/// Bilinear factors of a dynamic series, `X = U·Vᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair<T: Real> {
    /// Complex spatial factor, pixels × r.
    pub u: Array2<Cplx<T>>,
    /// Real temporal factor, frames × r.
    pub v: Array2<T>,
}

impl<T: Real> FactorPair<T> {
    pub fn new(u: Array2<Cplx<T>>, v: Array2<T>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::shape("FactorPair", format!("U {:?} and V {:?} differ in rank", u.dim(), v.dim())));
        }
        Ok(Self { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_frames(&self) -> usize {
        self.v.nrows()
    }

    pub fn casorati(&self) -> Array2<Cplx<T>> {
        casorati(self.u.view(), self.v.view())
    }

    pub fn series(&self, h: usize, w: usize, frame_dt: f64) -> Result<ImageSeries<T>> {
        if self.u.nrows() != h * w {
            return Err(Error::shape("FactorPair::series", format!("{} pixels for {h}x{w}", self.u.nrows())));
        }
        Ok(ImageSeries::from_casorati(self.casorati().view(), h, w, frame_dt))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && self.v.iter().all(|x| x.is_finite())
    }
}

/// Reconstruction output with its per-iteration history.
#[derive(Clone, Debug)]
pub struct Recon<T: Real> {
    pub factors: FactorPair<T>,
    /// Objective per sweep for low-rank, relative residual per iteration for SToRM.
    pub history: Vec<f64>,
    /// False when an iterative solve stopped at its iteration cap short of tolerance.
    pub converged: bool,
}

pub(crate) fn re_inner<T: Real>(a: ArrayView2<'_, Cplx<T>>, b: ArrayView2<'_, Cplx<T>>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re.as_f64()).sum()
}

pub(crate) fn frob_sq<T: Real>(a: ArrayView2<'_, Cplx<T>>) -> f64 {
    a.iter().map(|z| z.norm_sqr().as_f64()).sum()
}

/// Largest eigenvalue of a small real symmetric matrix.
pub(crate) fn sym_max_eig(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(0.0, f64::max)
}

/// `Re(AᴴA)` for a complex matrix, as an f64 nalgebra matrix.
pub(crate) fn real_gram<T: Real>(a: ArrayView2<'_, Cplx<T>>) -> nalgebra::DMatrix<f64> {
    let g = a.t().mapv(|z| z.conj()).dot(&a);
    nalgebra::DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[[i, j]].re.as_f64())
}

pub(crate) fn to_complex<T: Real>(v: ArrayView2<'_, T>) -> Array2<Cplx<T>> {
    v.mapv(|x| Complex::new(x, T::zero()))
}
