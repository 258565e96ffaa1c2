use super::coils::CoilMaps;
use super::operator::{OperatorMode, SamplingOperator};
use super::trajectory::TrajectorySchedule;
use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Acquired multi-coil k-space for a dynamic series.
#[derive(Clone, Debug)]
pub struct KSpaceDataset<T: Real> {
    /// `[frame][coil][sample]`
    pub samples: Vec<Vec<Vec<Cplx<T>>>>,
    pub schedule: TrajectorySchedule<T>,
    pub mode: OperatorMode,
    pub coilmaps: CoilMaps<T>,
    pub noise_sigma: T,
}

impl<T: Real> KSpaceDataset<T> {
    pub fn n_frames(&self) -> usize {
        self.samples.len()
    }

    pub fn n_coils(&self) -> usize {
        self.coilmaps.n_coils()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.coilmaps.dim()
    }

    pub fn operator(&self) -> Result<SamplingOperator<T>> {
        let op = SamplingOperator::new(&self.schedule, self.coilmaps.clone(), self.mode)?;
        self.validate_against(&op)?;
        Ok(op)
    }

    pub fn validate_against(&self, op: &SamplingOperator<T>) -> Result<()> {
        if self.samples.len() != op.n_frames() {
            return Err(Error::shape(
                "dataset",
                format!("{} frames of samples for a {}-frame schedule", self.samples.len(), op.n_frames()),
            ));
        }
        for (i, f) in self.samples.iter().enumerate() {
            if f.len() != self.n_coils() || f.iter().any(|c| c.len() != op.n_samples(i)) {
                return Err(Error::shape(
                    "dataset",
                    format!("frame {i}: expected {} coils x {} samples", self.n_coils(), op.n_samples(i)),
                ));
            }
        }
        Ok(())
    }

    /// `‖B‖²`
    pub fn energy(&self) -> T {
        self.samples
            .iter()
            .flatten()
            .flatten()
            .fold(T::zero(), |a, v| a + v.norm_sqr())
    }

    /// Per-frame navigator feature vectors: real and imaginary parts of every
    /// navigator sample, concatenated over coils.
    pub fn navigator_features(&self, op: &SamplingOperator<T>) -> Result<Vec<Vec<T>>> {
        let nav = op.navigator_indices();
        if nav.is_empty() || !self.schedule.has_consistent_navigators() {
            return Err(Error::MissingNavigators(
                "schedule has no navigator spokes at fixed locations".into(),
            ));
        }
        Ok(self
            .samples
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .flat_map(|coil| nav.iter().flat_map(move |&k| [coil[k].re, coil[k].im]))
                    .collect()
            })
            .collect())
    }
}
