//! Masked orthonormal Cartesian FFT sampling.

use ndarray::{Array2, ArrayView2};

use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Binary sampling pattern on the unshifted DFT grid (`[ky][kx]`, DC at `[0][0]`).
///
/// Samples are ordered row-major over the set bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CartesianMask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl CartesianMask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::shape("cartesian mask", format!("{} bits for a {h}x{w} grid", bits.len())));
        }
        Ok(Self { h, w, bits })
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            bits: vec![true; h * w],
        }
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            bits: vec![false; h * w],
        }
    }

    /// Nearest-grid rasterization of non-Cartesian points given in radians/pixel.
    pub fn from_points<T: Real>(points: &[[T; 2]], h: usize, w: usize) -> Self {
        let mut bits = vec![false; h * w];
        let two_pi = T::lit(2.0) * T::PI();
        for p in points {
            let ix = wrap((p[0] * T::from_count(w) / two_pi).round(), w);
            let iy = wrap((p[1] * T::from_count(h) / two_pi).round(), h);
            bits[iy * w + ix] = true;
        }
        Self { h, w, bits }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Flat grid indices of the sampled locations, in sample order.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    fn check(&self, h: usize, w: usize) -> Result<()> {
        if (self.h, self.w) != (h, w) {
            return Err(Error::shape(
                "masked_fft",
                format!("mask is {}x{} but image is {h}x{w}", self.h, self.w),
            ));
        }
        Ok(())
    }
}

fn wrap<T: Real>(v: T, n: usize) -> usize {
    let i = v.to_i64().expect("finite grid index");
    i.rem_euclid(n as i64) as usize
}

pub(crate) fn forward_with<T: Real>(image: ArrayView2<'_, Cplx<T>>, indices: &[usize], fft: &Fft2<T>) -> Vec<Cplx<T>> {
    let (h, w) = image.dim();
    let mut buf: Vec<Cplx<T>> = image.iter().copied().collect();
    fft.forward(&mut buf);
    let scale = T::one() / T::from_count(h * w).sqrt();
    indices.iter().map(|&i| buf[i] * scale).collect()
}

pub(crate) fn adjoint_with<T: Real>(samples: &[Cplx<T>], indices: &[usize], fft: &Fft2<T>) -> Array2<Cplx<T>> {
    let (h, w) = (fft.rows(), fft.cols());
    let mut buf = vec![Cplx::new(T::zero(), T::zero()); h * w];
    for (&i, &v) in indices.iter().zip(samples) {
        buf[i] = v;
    }
    fft.inverse(&mut buf);
    let scale = T::one() / T::from_count(h * w).sqrt();
    Array2::from_shape_vec((h, w), buf.into_iter().map(|v| v * scale).collect()).expect("grid sized buffer")
}

/// `P·A·x` with `A·x = F·x/√(HW)` followed by mask selection.
pub(crate) fn normal_with<T: Real>(image: ArrayView2<'_, Cplx<T>>, mask: &CartesianMask, fft: &Fft2<T>) -> Array2<Cplx<T>> {
    let (h, w) = image.dim();
    let mut buf: Vec<Cplx<T>> = image.iter().copied().collect();
    fft.forward(&mut buf);
    for (v, &b) in buf.iter_mut().zip(&mask.bits) {
        if !b {
            *v = Cplx::new(T::zero(), T::zero());
        }
    }
    fft.inverse(&mut buf);
    let scale = T::one() / T::from_count(h * w);
    Array2::from_shape_vec((h, w), buf.into_iter().map(|v| v * scale).collect()).expect("grid sized buffer")
}

/// Orthonormal 2-D DFT followed by mask selection.
pub fn masked_fft_forward<T: Real>(image: ArrayView2<'_, Cplx<T>>, mask: &CartesianMask) -> Result<Vec<Cplx<T>>> {
    let (h, w) = image.dim();
    mask.check(h, w)?;
    Ok(forward_with(image, &mask.indices(), &Fft2::new(h, w)))
}

/// Zero-filled inverse orthonormal DFT (adjoint of [`masked_fft_forward`]).
pub fn masked_fft_adjoint<T: Real>(samples: &[Cplx<T>], mask: &CartesianMask) -> Result<Array2<Cplx<T>>> {
    let idx = mask.indices();
    if idx.len() != samples.len() {
        return Err(Error::shape(
            "masked_fft_adjoint",
            format!("{} samples for {} mask locations", samples.len(), idx.len()),
        ));
    }
    Ok(adjoint_with(samples, &idx, &Fft2::new(mask.h, mask.w)))
}
