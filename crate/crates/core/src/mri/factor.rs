//! Factor-domain measurement and the data-consistency gradient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::operator::SamplingOperator;
use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Data term value and gradients with respect to both factors.
///
/// `g_u` holds `∂L/∂Re U + i·∂L/∂Im U`; `g_v` is the (real) gradient for `V`.
#[derive(Clone, Debug)]
pub struct DcGradient<T: Real> {
    pub loss: T,
    pub g_u: Array2<Cplx<T>>,
    pub g_v: Array2<T>,
}

pub(crate) fn complexify<T: Real>(v: ArrayView2<'_, T>) -> Array2<Cplx<T>> {
    v.mapv(|x| Cplx::new(x, T::zero()))
}

/// Reshapes a flat pixel column into an `H × W` image.
pub fn column_image<T: Real>(col: ArrayView1<'_, Cplx<T>>, h: usize, w: usize) -> Array2<Cplx<T>> {
    Array2::from_shape_vec((h, w), col.iter().copied().collect()).expect("column has H·W pixels")
}

/// Materializes frame `x_i = U·v_i` as an image.
pub fn synthesize<T: Real>(u: ArrayView2<'_, Cplx<T>>, v_i: ArrayView1<'_, T>, h: usize, w: usize) -> Array2<Cplx<T>> {
    let x: Array1<Cplx<T>> = u.dot(&v_i.mapv(|x| Cplx::new(x, T::zero())));
    Array2::from_shape_vec((h, w), x.to_vec()).expect("U rows are pixels")
}

/// Casorati matrix `U·Vᵀ` (pixels × frames).
pub fn casorati<T: Real>(u: ArrayView2<'_, Cplx<T>>, v: ArrayView2<'_, T>) -> Array2<Cplx<T>> {
    u.dot(&complexify(v).t())
}

fn check_factors<T: Real>(op: &SamplingOperator<T>, u: ArrayView2<'_, Cplx<T>>, v: ArrayView2<'_, T>) -> Result<()> {
    let (h, w) = op.dim();
    if u.nrows() != h * w || v.ncols() != u.ncols() || v.nrows() != op.n_frames() {
        return Err(Error::shape(
            "factors",
            format!(
                "U {:?}, V {:?} for {} frames of {h}x{w}",
                u.dim(),
                v.dim(),
                op.n_frames()
            ),
        ));
    }
    Ok(())
}

/// Multi-coil samples of frame `i` computed from the factors as
/// `Σ_j v_ij·𝒜_i(u_j)`, never forming the frame image.
pub fn frame_measure<T: Real>(
    op: &SamplingOperator<T>,
    frame: usize,
    u: ArrayView2<'_, Cplx<T>>,
    v_i: ArrayView1<'_, T>,
) -> Result<Vec<Vec<Cplx<T>>>> {
    let (h, w) = op.dim();
    if u.nrows() != h * w || v_i.len() != u.ncols() {
        return Err(Error::shape("frame_measure", format!("U {:?} with v of length {}", u.dim(), v_i.len())));
    }
    let zero = Cplx::new(T::zero(), T::zero());
    let n_coils = op.coils().n_coils();
    let mut out = vec![vec![zero; op.n_samples(frame)]; n_coils];
    for (j, col) in u.axis_iter(Axis(1)).enumerate() {
        let basis = op.forward_frame(frame, column_image(col, h, w).view())?;
        let vj = v_i[j];
        for (acc, b) in out.iter_mut().zip(basis) {
            acc.iter_mut().zip(b).for_each(|(a, s)| *a = *a + s * vj);
        }
    }
    Ok(out)
}

/// Gradient assembly from per-frame image-domain half-gradients `G[:, i]`.
fn finish<T: Real>(loss: T, g: Array2<Cplx<T>>, u: ArrayView2<'_, Cplx<T>>, v: ArrayView2<'_, T>) -> DcGradient<T> {
    let two = T::lit(2.0);
    let g_u = g.dot(&complexify(v)).mapv(|z| z * two);
    let g_v = g.t().mapv(|z| z.conj()).dot(&u).mapv(|z| z.re * two);
    DcGradient { loss, g_u, g_v }
}

/// `Σ_i ‖𝒜_i(U v_i) − b_i‖²` and its gradients, computed from explicit residuals.
pub fn dc_gradient<T: Real>(
    op: &SamplingOperator<T>,
    data: &[Vec<Vec<Cplx<T>>>],
    u: ArrayView2<'_, Cplx<T>>,
    v: ArrayView2<'_, T>,
) -> Result<DcGradient<T>> {
    check_factors(op, u, v)?;
    let (h, w) = op.dim();
    let x = casorati(u, v);
    let mut g = Array2::zeros((h * w, op.n_frames()));
    let mut loss = T::zero();
    for i in 0..op.n_frames() {
        let xi = column_image(x.column(i), h, w);
        let mut res = op.forward_frame(i, xi.view())?;
        for (r, b) in res.iter_mut().zip(&data[i]) {
            r.iter_mut().zip(b).for_each(|(a, &bv)| *a = *a - bv);
            loss = loss + r.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        }
        let gi = op.adjoint_frame(i, &res)?;
        g.column_mut(i).iter_mut().zip(gi.iter()).for_each(|(d, &s)| *d = s);
    }
    Ok(finish(loss, g, u, v))
}

/// Data term evaluated through the normal operator `𝒜ᴴ𝒜` and the precomputed
/// back-projection `𝒜ᴴB`:
/// `‖𝒜x − b‖² = Re⟨x, 𝒜ᴴ𝒜x⟩ − 2·Re⟨x, 𝒜ᴴb⟩ + ‖b‖²`.
#[derive(Clone, Debug)]
pub struct GramDataTerm<T: Real> {
    op: SamplingOperator<T>,
    back_projection: Vec<Array2<Cplx<T>>>,
    energy: Vec<T>,
}

impl<T: Real> GramDataTerm<T> {
    pub fn new(mut op: SamplingOperator<T>, data: &[Vec<Vec<Cplx<T>>>]) -> Result<Self> {
        op.precompute_gram();
        let back_projection = (0..op.n_frames())
            .map(|i| op.adjoint_frame(i, &data[i]))
            .collect::<Result<Vec<_>>>()?;
        let energy = data
            .iter()
            .map(|f| f.iter().flatten().fold(T::zero(), |a, z| a + z.norm_sqr()))
            .collect();
        Ok(Self {
            op,
            back_projection,
            energy,
        })
    }

    pub fn operator(&self) -> &SamplingOperator<T> {
        &self.op
    }

    pub fn n_frames(&self) -> usize {
        self.op.n_frames()
    }

    /// `‖B‖²`
    pub fn data_energy(&self) -> T {
        self.energy.iter().copied().sum()
    }

    pub fn back_projection(&self, frame: usize) -> &Array2<Cplx<T>> {
        &self.back_projection[frame]
    }

    /// Back-projections `𝒜_iᴴb_i` as columns (pixels × frames).
    pub fn back_projection_matrix(&self) -> Array2<Cplx<T>> {
        let (h, w) = self.op.dim();
        let mut out = Array2::zeros((h * w, self.n_frames()));
        for (i, r) in self.back_projection.iter().enumerate() {
            out.column_mut(i).iter_mut().zip(r.iter()).for_each(|(d, &s)| *d = s);
        }
        out
    }

    /// Column-wise `𝒜_iᴴ𝒜_i x_i` for a pixels × frames series.
    pub fn apply_normal(&self, x: ArrayView2<'_, Cplx<T>>) -> Result<Array2<Cplx<T>>> {
        let (h, w) = self.op.dim();
        if x.dim() != (h * w, self.n_frames()) {
            return Err(Error::shape(
                "apply_normal",
                format!("series {:?}, expected {}x{}", x.dim(), h * w, self.n_frames()),
            ));
        }
        let mut out = Array2::zeros(x.dim());
        for i in 0..self.n_frames() {
            let n = self.op.normal_frame(i, column_image(x.column(i), h, w).view())?;
            out.column_mut(i).iter_mut().zip(n.iter()).for_each(|(d, &s)| *d = s);
        }
        Ok(out)
    }

    /// Largest per-frame bound on the normal operator norm.
    pub fn normal_bound(&self) -> T {
        (0..self.n_frames()).fold(T::zero(), |m, i| m.max(self.op.normal_bound(i)))
    }

    pub fn evaluate(&self, u: ArrayView2<'_, Cplx<T>>, v: ArrayView2<'_, T>) -> Result<DcGradient<T>> {
        let all: Vec<usize> = (0..self.n_frames()).collect();
        self.evaluate_frames(u, v, &all)
    }

    /// Data term restricted to `frames`; other frames contribute nothing.
    pub fn evaluate_frames(&self, u: ArrayView2<'_, Cplx<T>>, v: ArrayView2<'_, T>, frames: &[usize]) -> Result<DcGradient<T>> {
        check_factors(&self.op, u, v)?;
        let (h, w) = self.op.dim();
        let x = casorati(u, v);
        let mut g = Array2::zeros((h * w, self.n_frames()));
        let mut loss = T::zero();
        for &i in frames {
            let xi = column_image(x.column(i), h, w);
            let n = self.op.normal_frame(i, xi.view())?;
            let r = &self.back_projection[i];
            let mut quad = T::zero();
            let mut lin = T::zero();
            for ((&xv, &nv), &rv) in xi.iter().zip(n.iter()).zip(r.iter()) {
                quad = quad + (xv.conj() * nv).re;
                lin = lin + (xv.conj() * rv).re;
            }
            loss = loss + quad - T::lit(2.0) * lin + self.energy[i];
            g.column_mut(i)
                .iter_mut()
                .zip(n.iter().zip(r.iter()))
                .for_each(|(d, (&nv, &rv))| *d = nv - rv);
        }
        Ok(finish(loss, g, u, v))
    }
}
