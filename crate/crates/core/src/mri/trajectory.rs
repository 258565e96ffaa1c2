use crate::scalar::Real;

/// One radial readout line through the k-space center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spoke<T> {
    /// Orientation in radians.
    pub angle: T,
    pub navigator: bool,
}

/// Per-frame radial spoke lists.
///
/// Navigator spokes come first within each frame, so the leading
/// `navigators_per_frame · n_readout` samples of every frame are navigator
/// samples at identical k-space locations.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySchedule<T> {
    pub frames: Vec<Vec<Spoke<T>>>,
    pub n_readout: usize,
}

impl<T: Real> TrajectorySchedule<T> {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn spokes_per_frame(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn navigators_per_frame(&self) -> usize {
        self.frames
            .first()
            .map_or(0, |f| f.iter().filter(|s| s.navigator).count())
    }

    /// Readout positions `κ_n = −π + 2πn/N`, `n = 0..N`.
    pub fn readout_positions(&self) -> Vec<T> {
        let n = self.n_readout;
        (0..n)
            .map(|i| -T::PI() + T::lit(2.0) * T::PI() * T::from_count(i) / T::from_count(n))
            .collect()
    }

    /// k-space coordinates `(kx, ky)` in radians/pixel of every sample in a frame,
    /// spoke-major.
    pub fn frame_points(&self, frame: usize) -> Vec<[T; 2]> {
        let kappa = self.readout_positions();
        self.frames[frame]
            .iter()
            .flat_map(|s| {
                let (sn, cs) = s.angle.sin_cos();
                kappa.iter().map(move |&k| [k * cs, k * sn])
            })
            .collect()
    }

    /// Checks the navigator layout: same count in every frame, navigators
    /// first, identical navigator angles across frames.
    pub fn has_consistent_navigators(&self) -> bool {
        let Some(first) = self.frames.first() else {
            return false;
        };
        let nav: Vec<T> = first.iter().filter(|s| s.navigator).map(|s| s.angle).collect();
        if nav.is_empty() {
            return false;
        }
        self.frames.iter().all(|f| {
            f.len() == first.len()
                && f.iter().take(nav.len()).all(|s| s.navigator)
                && f.iter().skip(nav.len()).all(|s| !s.navigator)
                && f.iter().zip(&nav).all(|(s, &a)| s.angle == a)
        })
    }
}
