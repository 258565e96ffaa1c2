//! Scalar abstraction shared by every numerical module.
//!
//! All math in the crate is written against [`Real`], which is implemented
//! for `f32` and `f64`. Double precision is the default through the aliases
//! exported at the crate root.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
///
/// `Float::abs` and `Signed::abs` are both in scope through the supertraits,
/// so call sites use `Float::abs(x)` explicitly.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + rustfft::FftNum
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`] component type.
pub type Cplx<T> = Complex<T>;

/// `exp(i·phase)`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Cplx<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(c, s)
}

/// Real part of `conj(a)·b`, i.e. the real inner product of two complex numbers
/// viewed as 2-vectors.
#[inline]
pub fn re_dot<T: Real>(a: Cplx<T>, b: Cplx<T>) -> T {
    a.re * b.re + a.im * b.im
}
