//! Forward and adjoint kernels for the layer primitives.
//!
//! Convolutions are lowered to a column matrix (`im2col`) followed by a GEMM,
//! with zero "same" padding and stride 1. A 1-D convolution is the 2-D kernel
//! run on a single row with a `1 × k` window.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Geometry of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    #[inline]
    fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub(crate) fn for_conv2d<T: Real>(
        input: &Tensor<T>,
        weights: &Tensor<T>,
        bias: &Tensor<T>,
    ) -> Result<Self> {
        let (is, ws, bs) = (input.shape(), weights.shape(), bias.shape());
        if is.len() != 3 || ws.len() != 4 || bs.len() != 1 {
            return Err(Error::shape(
                "conv2d",
                format!("expected input [C,H,W], weights [Co,Ci,k,k], bias [Co]; got {is:?}, {ws:?}, {bs:?}"),
            ));
        }
        if ws[1] != is[0] {
            return Err(Error::shape(
                "conv2d",
                format!("weights expect {} input channels, input has {}", ws[1], is[0]),
            ));
        }
        if ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square with odd extent, got {}x{}", ws[2], ws[3]),
            ));
        }
        if bs[0] != ws[0] {
            return Err(Error::shape(
                "conv2d",
                format!("bias has {} entries for {} output channels", bs[0], ws[0]),
            ));
        }
        Ok(Self {
            c_in: is[0],
            c_out: ws[0],
            height: is[1],
            width: is[2],
            kh: ws[2],
            kw: ws[3],
        })
    }

    pub(crate) fn for_conv1d<T: Real>(
        input: &Tensor<T>,
        weights: &Tensor<T>,
        bias: &Tensor<T>,
    ) -> Result<Self> {
        let (is, ws, bs) = (input.shape(), weights.shape(), bias.shape());
        if is.len() != 2 || ws.len() != 3 || bs.len() != 1 {
            return Err(Error::shape(
                "conv1d",
                format!("expected input [C,L], weights [Co,Ci,k], bias [Co]; got {is:?}, {ws:?}, {bs:?}"),
            ));
        }
        if ws[1] != is[0] {
            return Err(Error::shape(
                "conv1d",
                format!("weights expect {} input channels, input has {}", ws[1], is[0]),
            ));
        }
        if ws[2] % 2 == 0 {
            return Err(Error::shape(
                "conv1d",
                format!("kernel extent must be odd, got {}", ws[2]),
            ));
        }
        if bs[0] != ws[0] {
            return Err(Error::shape(
                "conv1d",
                format!("bias has {} entries for {} output channels", bs[0], ws[0]),
            ));
        }
        Ok(Self {
            c_in: is[0],
            c_out: ws[0],
            height: 1,
            width: is[1],
            kh: 1,
            kw: ws[2],
        })
    }
}

/// Column matrix of shape `(c_in·kh·kw) × (H·W)`.
pub(crate) fn im2col<T: Real>(input: &[T], g: &ConvGeom) -> Vec<T> {
    let (h, w) = (g.height, g.width);
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let npix = g.pixels();
    let mut cols = vec![T::zero(); g.patch() * npix];
    for c in 0..g.c_in {
        let plane = &input[c * npix..(c + 1) * npix];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let row = (c * g.kh + dy) * g.kw + dx;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for y in 0..h {
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    let shift = dx as isize - pw as isize;
                    let (x0, x1) = if shift < 0 {
                        ((-shift) as usize, w)
                    } else {
                        (0, w - shift as usize)
                    };
                    for x in x0..x1 {
                        dst_row[x] = src_row[(x as isize + shift) as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of a column matrix back onto the input grid (adjoint of `im2col`).
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let (h, w) = (g.height, g.width);
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let npix = g.pixels();
    let mut out = vec![T::zero(); g.c_in * npix];
    for c in 0..g.c_in {
        let plane = &mut out[c * npix..(c + 1) * npix];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let row = (c * g.kh + dy) * g.kw + dx;
                let src = &cols[row * npix..(row + 1) * npix];
                for y in 0..h {
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src_row = &src[y * w..(y + 1) * w];
                    let shift = dx as isize - pw as isize;
                    let (x0, x1) = if shift < 0 {
                        ((-shift) as usize, w)
                    } else {
                        (0, w - shift as usize)
                    };
                    for x in x0..x1 {
                        let t = (x as isize + shift) as usize;
                        dst_row[t] = dst_row[t] + src_row[x];
                    }
                }
            }
        }
    }
    out
}

fn view<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer sized for view")
}

fn view_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer sized for view")
}

/// `out = W·cols + bias`, returns `c_out × pixels` row-major.
pub(crate) fn conv_forward_cols<T: Real>(
    cols: &[T],
    weights: &[T],
    bias: &[T],
    g: &ConvGeom,
) -> Vec<T> {
    let npix = g.pixels();
    let mut out = vec![T::zero(); g.c_out * npix];
    for (c, chunk) in out.chunks_mut(npix).enumerate() {
        chunk.fill(bias[c]);
    }
    general_mat_mul(
        T::one(),
        &view(weights, g.c_out, g.patch()),
        &view(cols, g.patch(), npix),
        T::one(),
        &mut view_mut(&mut out, g.c_out, npix),
    );
    out
}

/// Gradients of a convolution given the output adjoint.
pub(crate) struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv_backward<T: Real>(
    grad_out: &[T],
    cols: &[T],
    weights: &[T],
    g: &ConvGeom,
) -> ConvGrads<T> {
    let npix = g.pixels();
    let gy = view(grad_out, g.c_out, npix);

    let mut gw = vec![T::zero(); g.c_out * g.patch()];
    general_mat_mul(
        T::one(),
        &gy,
        &view(cols, g.patch(), npix).t(),
        T::zero(),
        &mut view_mut(&mut gw, g.c_out, g.patch()),
    );

    let mut gcols = vec![T::zero(); g.patch() * npix];
    general_mat_mul(
        T::one(),
        &view(weights, g.c_out, g.patch()).t(),
        &gy,
        T::zero(),
        &mut view_mut(&mut gcols, g.patch(), npix),
    );

    let gb = grad_out
        .chunks(npix)
        .map(|row| row.iter().fold(T::zero(), |a, &b| a + b))
        .collect();

    ConvGrads {
        input: col2im(&gcols, g),
        weights: gw,
        bias: gb,
    }
}

/// Same-padded 2-D convolution: `[C_in,H,W] ⊛ [C_out,C_in,k,k] + bias → [C_out,H,W]`.
pub fn conv2d<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = ConvGeom::for_conv2d(input, weights, bias)?;
    let cols = im2col(input.data(), &g);
    let out = conv_forward_cols(&cols, weights.data(), bias.data(), &g);
    Tensor::new(vec![g.c_out, g.height, g.width], out)
}

/// Same-padded 1-D convolution: `[C_in,L] ⊛ [C_out,C_in,k] + bias → [C_out,L]`.
pub fn conv1d<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = ConvGeom::for_conv1d(input, weights, bias)?;
    let cols = im2col(input.data(), &g);
    let out = conv_forward_cols(&cols, weights.data(), bias.data(), &g);
    Tensor::new(vec![g.c_out, g.width], out)
}

/// Elementwise `max(x, 0)`.
pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}
