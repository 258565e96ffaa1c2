//! Per-frame multi-coil measurement operators `𝒜_i`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::cartesian::{self, CartesianMask};
use super::coils::CoilMaps;
use super::fft::Fft2;
use super::nudft;
use super::trajectory::TrajectorySchedule;
use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// How a trajectory is realized as a sampling operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorMode {
    /// Direct non-uniform DFT along the radial spokes.
    #[default]
    Radial,
    /// Spokes rasterized onto the Cartesian grid, masked orthonormal FFT.
    Cartesian,
}

#[derive(Clone, Debug)]
enum FrameOperator<T: Real> {
    Radial {
        points: Vec<[T; 2]>,
        gram: Option<Vec<Cplx<T>>>,
    },
    Cartesian {
        mask: CartesianMask,
        indices: Vec<usize>,
    },
}

/// Sampling operator for a whole series: coil weighting followed by the
/// frame's k-space sampling.
#[derive(Clone, Debug)]
pub struct SamplingOperator<T: Real> {
    h: usize,
    w: usize,
    frames: Vec<FrameOperator<T>>,
    coils: CoilMaps<T>,
    navigator: Vec<usize>,
    fft: Fft2<T>,
    fft_padded: Fft2<T>,
}

impl<T: Real> SamplingOperator<T> {
    pub fn new(schedule: &TrajectorySchedule<T>, coils: CoilMaps<T>, mode: OperatorMode) -> Result<Self> {
        let (h, w) = coils.dim();
        let nav_spokes = schedule.navigators_per_frame();
        let mut navigator = Vec::new();
        let frames = (0..schedule.n_frames())
            .map(|i| {
                let points = schedule.frame_points(i);
                match mode {
                    OperatorMode::Radial => FrameOperator::Radial { points, gram: None },
                    OperatorMode::Cartesian => {
                        let mask = CartesianMask::from_points(&points, h, w);
                        let indices = mask.indices();
                        FrameOperator::Cartesian { mask, indices }
                    }
                }
            })
            .collect::<Vec<_>>();
        if nav_spokes > 0 {
            navigator = match (&frames[0], mode) {
                (_, OperatorMode::Radial) => (0..nav_spokes * schedule.n_readout).collect(),
                (FrameOperator::Cartesian { indices, .. }, OperatorMode::Cartesian) => indices
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g / w == 0 || g % w == 0)
                    .map(|(k, _)| k)
                    .collect(),
                _ => unreachable!(),
            };
        }
        Ok(Self {
            h,
            w,
            frames,
            coils,
            navigator,
            fft: Fft2::new(h, w),
            fft_padded: Fft2::new(2 * h, 2 * w),
        })
    }

    /// Cartesian operator from explicit per-frame masks. Navigator samples are
    /// the sampled positions of grid row 0 and column 0, which must be sampled
    /// identically in every frame for SToRM.
    pub fn from_masks(masks: Vec<CartesianMask>, coils: CoilMaps<T>) -> Result<Self> {
        let (h, w) = coils.dim();
        if masks.iter().any(|m| m.dim() != (h, w)) {
            return Err(Error::shape("from_masks", format!("masks must all be {h}x{w}")));
        }
        let navigator = masks
            .first()
            .map(|m| {
                m.indices()
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g / w == 0 || g % w == 0)
                    .map(|(k, _)| k)
                    .collect()
            })
            .unwrap_or_default();
        let frames = masks
            .into_iter()
            .map(|mask| {
                let indices = mask.indices();
                FrameOperator::Cartesian { mask, indices }
            })
            .collect();
        Ok(Self {
            h,
            w,
            frames,
            coils,
            navigator,
            fft: Fft2::new(h, w),
            fft_padded: Fft2::new(2 * h, 2 * w),
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn coils(&self) -> &CoilMaps<T> {
        &self.coils
    }

    pub fn n_samples(&self, frame: usize) -> usize {
        match &self.frames[frame] {
            FrameOperator::Radial { points, .. } => points.len(),
            FrameOperator::Cartesian { indices, .. } => indices.len(),
        }
    }

    /// Positions of the navigator samples within every frame's sample vector.
    pub fn navigator_indices(&self) -> &[usize] {
        &self.navigator
    }

    /// Radial k-space coordinates of a frame, if the frame is radial.
    pub fn frame_points(&self, frame: usize) -> Option<&[[T; 2]]> {
        match &self.frames[frame] {
            FrameOperator::Radial { points, .. } => Some(points),
            FrameOperator::Cartesian { .. } => None,
        }
    }

    /// Precomputes the Gram kernels that make [`Self::normal_frame`] FFT-based
    /// for radial frames.
    pub fn precompute_gram(&mut self) {
        let (h, w) = (self.h, self.w);
        for f in &mut self.frames {
            if let FrameOperator::Radial { points, gram } = f {
                if gram.is_none() {
                    *gram = Some(nudft::gram_kernel_spectrum(points, h, w, &self.fft_padded));
                }
            }
        }
    }

    /// Upper bound on `‖Σ_c conj(s_c)·𝒜_iᴴ𝒜_i(s_c·)‖₂`, exact up to the
    /// circulant embedding for radial frames once the Gram kernel is cached.
    pub fn normal_bound(&self, frame: usize) -> T {
        let coil_peak = self.coils.energy().iter().copied().fold(T::zero(), T::max);
        let sampling = match &self.frames[frame] {
            FrameOperator::Radial { gram: Some(k), .. } => k.iter().fold(T::zero(), |m, z| m.max(z.norm())),
            FrameOperator::Radial { points, gram: None } => T::from_count(points.len() * self.h * self.w),
            FrameOperator::Cartesian { .. } => T::one(),
        };
        sampling * coil_peak
    }

    fn coil_images(&self, image: ArrayView2<'_, Cplx<T>>) -> Vec<Array2<Cplx<T>>> {
        self.coils.maps().iter().map(|s| s * &image).collect()
    }

    /// Single-coil sampling of an already coil-weighted image.
    pub fn sample_image(&self, frame: usize, image: ArrayView2<'_, Cplx<T>>) -> Vec<Cplx<T>> {
        match &self.frames[frame] {
            FrameOperator::Radial { points, .. } => nudft::nudft_forward_multi(&[image], points).pop().unwrap(),
            FrameOperator::Cartesian { indices, .. } => cartesian::forward_with(image, indices, &self.fft),
        }
    }

    /// `[𝒜_i(s_c ⊙ x)]_c`
    pub fn forward_frame(&self, frame: usize, image: ArrayView2<'_, Cplx<T>>) -> Result<Vec<Vec<Cplx<T>>>> {
        self.check_image(image)?;
        let coil_images = self.coil_images(image);
        Ok(match &self.frames[frame] {
            FrameOperator::Radial { points, .. } => {
                let views: Vec<_> = coil_images.iter().map(|a| a.view()).collect();
                nudft::nudft_forward_multi(&views, points)
            }
            FrameOperator::Cartesian { indices, .. } => coil_images
                .iter()
                .map(|c| cartesian::forward_with(c.view(), indices, &self.fft))
                .collect(),
        })
    }

    /// `Σ_c conj(s_c) ⊙ 𝒜_iᴴ b_c`
    pub fn adjoint_frame(&self, frame: usize, samples: &[Vec<Cplx<T>>]) -> Result<Array2<Cplx<T>>> {
        let n = self.n_samples(frame);
        if samples.len() != self.coils.n_coils() || samples.iter().any(|b| b.len() != n) {
            return Err(Error::shape(
                "adjoint_frame",
                format!("expected {} coils x {n} samples", self.coils.n_coils()),
            ));
        }
        let images = match &self.frames[frame] {
            FrameOperator::Radial { points, .. } => {
                let refs: Vec<&[Cplx<T>]> = samples.iter().map(Vec::as_slice).collect();
                nudft::nudft_adjoint_multi(&refs, points, self.h, self.w)
            }
            FrameOperator::Cartesian { indices, .. } => samples
                .iter()
                .map(|b| cartesian::adjoint_with(b, indices, &self.fft))
                .collect(),
        };
        Ok(self.combine(images))
    }

    /// `Σ_c conj(s_c) ⊙ 𝒜_iᴴ𝒜_i(s_c ⊙ x)`
    pub fn normal_frame(&self, frame: usize, image: ArrayView2<'_, Cplx<T>>) -> Result<Array2<Cplx<T>>> {
        self.check_image(image)?;
        let coil_images = self.coil_images(image);
        let images = match &self.frames[frame] {
            FrameOperator::Radial { gram: Some(k), .. } => coil_images
                .iter()
                .map(|c| nudft::gram_apply(k, c.view(), &self.fft_padded))
                .collect(),
            FrameOperator::Radial { points, gram: None } => {
                let views: Vec<_> = coil_images.iter().map(|a| a.view()).collect();
                let b = nudft::nudft_forward_multi(&views, points);
                let refs: Vec<&[Cplx<T>]> = b.iter().map(Vec::as_slice).collect();
                nudft::nudft_adjoint_multi(&refs, points, self.h, self.w)
            }
            FrameOperator::Cartesian { mask, .. } => coil_images
                .iter()
                .map(|c| cartesian::normal_with(c.view(), mask, &self.fft))
                .collect(),
        };
        Ok(self.combine(images))
    }

    fn combine(&self, images: Vec<Array2<Cplx<T>>>) -> Array2<Cplx<T>> {
        let mut out = Array2::zeros((self.h, self.w));
        for (s, im) in self.coils.maps().iter().zip(images) {
            ndarray::Zip::from(&mut out)
                .and(s)
                .and(&im)
                .for_each(|o, &sv, &v| *o = *o + sv.conj() * v);
        }
        out
    }

    fn check_image(&self, image: ArrayView2<'_, Cplx<T>>) -> Result<()> {
        if image.dim() != (self.h, self.w) {
            return Err(Error::shape(
                "sampling operator",
                format!("image is {:?}, operator expects {}x{}", image.dim(), self.h, self.w),
            ));
        }
        Ok(())
    }
}
