//! Multi-coil k-space measurement operators and the factor-domain data term.

mod cartesian;
mod coils;
mod dataset;
mod factor;
mod fft;
mod nudft;
mod operator;
mod trajectory;

pub use cartesian::{masked_fft_adjoint, masked_fft_forward, CartesianMask};
pub use coils::CoilMaps;
pub use dataset::KSpaceDataset;
pub use factor::{casorati, column_image, dc_gradient, frame_measure, synthesize, DcGradient, GramDataTerm};
pub use fft::Fft2;
pub use nudft::{nudft_adjoint, nudft_forward};
pub use operator::{OperatorMode, SamplingOperator};
pub use trajectory::{Spoke, TrajectorySchedule};
