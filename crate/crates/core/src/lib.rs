//! Generator-regularized bilinear reconstruction of dynamic MRI.
//!
//! Everything numeric is generic over `f32`/`f64`; the aliases below fix the
//! double-precision build used by the pipeline.

pub mod difftensor;
pub mod generators;
pub mod metrics;
pub mod deblur;
pub mod error;
pub mod mri;
pub mod phantom;
pub mod baselines;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

pub type Complex64 = Cplx<f64>;
pub type Tensor64 = difftensor::Tensor<f64>;
pub type ImageSeries64 = phantom::ImageSeries<f64>;
pub type KSpaceDataset64 = mri::KSpaceDataset<f64>;
pub type SamplingOperator64 = mri::SamplingOperator<f64>;
pub type GramDataTerm64 = mri::GramDataTerm<f64>;
pub type CoilMaps64 = mri::CoilMaps<f64>;
pub type FactorPair64 = baselines::FactorPair<f64>;
pub type GeneratorNet64 = generators::GeneratorNet<f64>;
pub type LatentTrajectory64 = generators::LatentTrajectory<f64>;
pub type SpatialSeed64 = generators::SpatialSeed<f64>;
pub type DeblurState64 = deblur::DeblurState<f64>;
pub use deblur::{ReconConfig, TrainTrace};

pub type ImageSeries32 = phantom::ImageSeries<f32>;
pub type FactorPair32 = baselines::FactorPair<f32>;
pub type GeneratorNet32 = generators::GeneratorNet<f32>;
pub type DeblurState32 = deblur::DeblurState<f32>;
