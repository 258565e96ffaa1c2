//! Direct (exact) non-uniform DFT on a centered pixel grid.
//!
//! `b[m] = Σ_p x(p)·exp(−i·k_m·p)` with pixel coordinates `p − ⌊N/2⌋`, so a
//! delta at the center pixel has a phase-free spectrum. The 2-D exponential
//! factorizes per axis, which turns both the forward map and its adjoint into
//! complex GEMMs against per-axis phase tables.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::scalar::{cis, Cplx, Real};

#[inline]
fn centered<T: Real>(i: usize, n: usize) -> T {
    T::from_count(i) - T::from_count(n / 2)
}

/// Phase table `E[m, j] = exp(sign·i·k_m[axis]·(j − ⌊n/2⌋))`.
fn phase_table<T: Real>(points: &[[T; 2]], axis: usize, n: usize, sign: T) -> Array2<Cplx<T>> {
    Array2::from_shape_fn((points.len(), n), |(m, j)| cis(sign * points[m][axis] * centered::<T>(j, n)))
}

fn check_points<T: Real>(points: &[[T; 2]]) -> Result<()> {
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::shape("nudft", "non-finite k-space coordinate"));
    }
    Ok(())
}

/// Forward non-uniform DFT of a single `H × W` image.
pub fn nudft_forward<T: Real>(image: ArrayView2<'_, Cplx<T>>, points: &[[T; 2]]) -> Result<Vec<Cplx<T>>> {
    check_points(points)?;
    Ok(nudft_forward_multi(&[image], points).pop().expect("one image in, one out"))
}

/// Adjoint (conjugate transpose) of [`nudft_forward`].
pub fn nudft_adjoint<T: Real>(samples: &[Cplx<T>], points: &[[T; 2]], h: usize, w: usize) -> Result<Array2<Cplx<T>>> {
    if samples.len() != points.len() {
        return Err(Error::shape(
            "nudft_adjoint",
            format!("{} samples for {} points", samples.len(), points.len()),
        ));
    }
    check_points(points)?;
    Ok(nudft_adjoint_multi(&[samples], points, h, w).pop().expect("one image out"))
}

/// Forward transform of several same-size images sharing one trajectory.
pub(crate) fn nudft_forward_multi<T: Real>(images: &[ArrayView2<'_, Cplx<T>>], points: &[[T; 2]]) -> Vec<Vec<Cplx<T>>> {
    let (h, w) = images[0].dim();
    let m = points.len();
    let ex = phase_table(points, 0, w, -T::one());
    let ey = phase_table(points, 1, h, -T::one());
    let stacked = concatenate(Axis(1), images).expect("images share extent");
    // P[m, c·W + x] = Σ_y ey[m, y]·x_c[y, x]
    let p = ey.dot(&stacked);
    (0..images.len())
        .map(|c| {
            let block = p.slice(s![.., c * w..(c + 1) * w]);
            (0..m)
                .map(|k| {
                    block
                        .row(k)
                        .iter()
                        .zip(ex.row(k))
                        .fold(Cplx::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b)
                })
                .collect()
        })
        .collect()
}

/// Adjoint transform of several sample vectors sharing one trajectory.
pub(crate) fn nudft_adjoint_multi<T: Real>(samples: &[&[Cplx<T>]], points: &[[T; 2]], h: usize, w: usize) -> Vec<Array2<Cplx<T>>> {
    let m = points.len();
    let n = samples.len();
    let ex_conj = phase_table(points, 0, w, T::one());
    let ey_conj = phase_table(points, 1, h, T::one());
    let mut y = Array2::<Cplx<T>>::zeros((m, n * w));
    for (c, b) in samples.iter().enumerate() {
        for k in 0..m {
            let bk = b[k];
            let mut row = y.slice_mut(s![k, c * w..(c + 1) * w]);
            row.iter_mut().zip(ex_conj.row(k)).for_each(|(d, &e)| *d = bk * e);
        }
    }
    let x = ey_conj.t().dot(&y);
    (0..n)
        .map(|c| x.slice(s![.., c * w..(c + 1) * w]).to_owned())
        .collect()
}

/// Spectrum of the circulant embedding of the Gram kernel
/// `t[Δ] = Σ_m exp(i·k_m·Δ)` on a `2H × 2W` grid, so that `AᴴA` becomes a
/// zero-padded FFT convolution. The embedding is exact for the direct DFT.
pub(crate) fn gram_kernel_spectrum<T: Real>(points: &[[T; 2]], h: usize, w: usize, fft: &Fft2<T>) -> Vec<Cplx<T>> {
    let (hh, ww) = (2 * h, 2 * w);
    let lag = |i: usize, n: usize| -> T {
        if i < n {
            T::from_count(i)
        } else {
            T::from_count(i) - T::from_count(2 * n)
        }
    };
    let tx = Array2::from_shape_fn((points.len(), ww), |(m, j)| cis(points[m][0] * lag(j, w)));
    let ty = Array2::from_shape_fn((points.len(), hh), |(m, j)| cis(points[m][1] * lag(j, h)));
    let c = ty.t().dot(&tx);
    let mut buf: Vec<Cplx<T>> = c.iter().copied().collect();
    fft.forward(&mut buf);
    buf
}

/// Applies `AᴴA` through the Gram kernel spectrum.
pub(crate) fn gram_apply<T: Real>(spectrum: &[Cplx<T>], image: ArrayView2<'_, Cplx<T>>, fft: &Fft2<T>) -> Array2<Cplx<T>> {
    let (h, w) = image.dim();
    let ww = 2 * w;
    let zero = Cplx::new(T::zero(), T::zero());
    let mut buf = vec![zero; 4 * h * w];
    for (y, row) in image.rows().into_iter().enumerate() {
        buf[y * ww..y * ww + w].iter_mut().zip(row).for_each(|(d, &v)| *d = v);
    }
    fft.apply(&mut buf, false, h, ww);
    buf.iter_mut().zip(spectrum).for_each(|(a, &k)| *a = *a * k);
    fft.inverse_leading_rows(&mut buf, h);
    let scale = T::one() / T::from_count(4 * h * w);
    Array2::from_shape_fn((h, w), |(y, x)| buf[y * ww + x] * scale)
}
