//! Planned 2-D FFTs on row-major complex buffers.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::scalar::{Cplx, Real};

const TILE: usize = 16;

/// Unnormalized 2-D FFT pair for a fixed `rows × cols` grid.
#[derive(Clone)]
pub struct Fft2<T: Real> {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn forward(&self, buf: &mut [Cplx<T>]) {
        self.apply(buf, false, self.rows, self.cols);
    }

    /// Unnormalized inverse: `inverse(forward(x)) == rows·cols·x`.
    pub fn inverse(&self, buf: &mut [Cplx<T>]) {
        self.apply(buf, true, self.rows, self.cols);
    }

    /// Transform where only the leading `live_rows` rows of the input are
    /// nonzero and only the leading `keep_cols` columns of the output are
    /// needed. Columns beyond `keep_cols` are left in an unspecified state.
    pub(crate) fn apply(&self, buf: &mut [Cplx<T>], inverse: bool, live_rows: usize, keep_cols: usize) {
        debug_assert_eq!(buf.len(), self.rows * self.cols);
        let (row_fft, col_fft) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let mut scratch = vec![Cplx::new(T::zero(), T::zero()); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
        row_fft.process_with_scratch(&mut buf[..live_rows * self.cols], &mut scratch);

        let mut cols = vec![Cplx::new(T::zero(), T::zero()); keep_cols * self.rows];
        self.gather_columns(buf, &mut cols, keep_cols);
        col_fft.process_with_scratch(&mut cols, &mut scratch);
        self.scatter_columns(&cols, buf, keep_cols, self.rows);
    }

    // column-major copy of the leading `n` columns, tiled to dodge
    // power-of-two stride conflicts
    fn gather_columns(&self, buf: &[Cplx<T>], cols: &mut [Cplx<T>], n: usize) {
        let (rows, stride) = (self.rows, self.cols);
        for r0 in (0..rows).step_by(TILE) {
            for c0 in (0..n).step_by(TILE) {
                for r in r0..(r0 + TILE).min(rows) {
                    for c in c0..(c0 + TILE).min(n) {
                        cols[c * rows + r] = buf[r * stride + c];
                    }
                }
            }
        }
    }

    fn scatter_columns(&self, cols: &[Cplx<T>], buf: &mut [Cplx<T>], n: usize, out_rows: usize) {
        let (rows, stride) = (self.rows, self.cols);
        for r0 in (0..out_rows).step_by(TILE) {
            for c0 in (0..n).step_by(TILE) {
                for r in r0..(r0 + TILE).min(out_rows) {
                    for c in c0..(c0 + TILE).min(n) {
                        buf[r * stride + c] = cols[c * rows + r];
                    }
                }
            }
        }
    }
}

impl<T: Real> Fft2<T> {
    /// Inverse transform of a fully populated spectrum where only the leading
    /// `out_rows` rows of the result are needed.
    pub(crate) fn inverse_leading_rows(&self, buf: &mut [Cplx<T>], out_rows: usize) {
        let mut scratch = vec![Cplx::new(T::zero(), T::zero()); self.row_inv.get_inplace_scratch_len().max(self.col_inv.get_inplace_scratch_len())];
        let mut cols = vec![Cplx::new(T::zero(), T::zero()); self.cols * self.rows];
        // columns first so that only out_rows row transforms are needed
        self.gather_columns(buf, &mut cols, self.cols);
        self.col_inv.process_with_scratch(&mut cols, &mut scratch);
        self.scatter_columns(&cols, buf, self.cols, out_rows);
        self.row_inv
            .process_with_scratch(&mut buf[..out_rows * self.cols], &mut scratch);
    }
}
