use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Complex coil sensitivity maps, one `H × W` image per receive channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps<T: Real> {
    maps: Vec<Array2<Cplx<T>>>,
}

impl<T: Real> CoilMaps<T> {
    pub fn new(maps: Vec<Array2<Cplx<T>>>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Config("at least one coil map is required".into()))?;
        let dim = first.dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::shape("coil maps", "maps differ in extent"));
        }
        Ok(Self { maps })
    }

    /// Single uniform unit sensitivity.
    pub fn flat(h: usize, w: usize) -> Self {
        Self {
            maps: vec![Array2::from_elem((h, w), Cplx::new(T::one(), T::zero()))],
        }
    }

    pub fn n_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.maps[0].dim()
    }

    pub fn maps(&self) -> &[Array2<Cplx<T>>] {
        &self.maps
    }

    pub fn map(&self, coil: usize) -> &Array2<Cplx<T>> {
        &self.maps[coil]
    }

    /// `Σ_c |s_c(p)|²` per pixel.
    pub fn energy(&self) -> Array2<T> {
        let mut e = Array2::zeros(self.dim());
        for m in &self.maps {
            e.zip_mut_with(m, |a: &mut T, s: &Cplx<T>| *a = *a + s.norm_sqr());
        }
        e
    }

    /// Root-sum-of-squares combination of coil images `s_c ⊙ x`.
    pub fn sum_of_squares(&self, coil_images: &[Array2<Cplx<T>>]) -> Array2<T> {
        let mut e: Array2<T> = Array2::zeros(self.dim());
        for im in coil_images {
            e.zip_mut_with(im, |a, s| *a = *a + s.norm_sqr());
        }
        e.mapv_inplace(|v| v.sqrt());
        e
    }

    /// Checks that no pixel has zero total sensitivity.
    pub fn validate(&self) -> Result<()> {
        let e = self.energy();
        if e.iter().any(|&v| v.is_nan() || v <= T::zero()) {
            return Err(Error::Degenerate("coil maps have a pixel with zero total sensitivity".into()));
        }
        Ok(())
    }
}
