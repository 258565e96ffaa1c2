//! Generator-regularized reconstruction: unsupervised pretraining on baseline
//! factors, the joint ℓ1/TV-regularized fit and frame synthesis.

mod init;
mod optim;
mod pretrain;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{l1_weight_norm_with, temporal_forward, GeneratorNet, LatentTrajectory, SpatialSeed};
use crate::mri::{synthesize, OperatorMode};
use crate::scalar::{Cplx, Real};

pub use init::{harmonic_select, initialize, InitReport};
pub use optim::{soft_threshold, GroupState, Optimizer};
pub use pretrain::{pretrain_spatial, pretrain_temporal, PretrainConfig, PretrainOutcome, TemporalPretrainOutcome};
pub use train::{data_weight, reconstruct, smooth_gradient, Checkpoint, DeblurOutcome, SmoothGradient};

/// Where the generators and latents start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Pretrain on SToRM factors.
    #[default]
    Storm,
    /// Pretrain on low-rank factors.
    Lowrank,
    /// Random weights and latents; the seed image still comes from SToRM.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub rank: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub lambda_theta: f64,
    pub lambda_phi: f64,
    pub lambda_tv: f64,
    pub step_theta: f64,
    pub step_phi: f64,
    pub step_z: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub pretrain_spatial: PretrainConfig,
    pub pretrain_temporal: PretrainConfig,
    pub init: InitMode,
    pub operator: OperatorMode,
    pub seed: u64,
    /// Data term weight: the fit is `data_scale·‖𝒜X − B‖² / ‖B‖²`.
    pub data_scale: f64,
    /// Checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Store `Z` in the trace every this many epochs; 0 disables.
    pub z_snapshot_every: usize,
    /// Frames per step; `None` is one full-batch step per epoch.
    pub batch_frames: Option<usize>,
    /// Stop after this many epochs without improvement.
    pub early_stopping: Option<usize>,
    pub l1_include_bias: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            rank: 30,
            latent_dim: 2,
            hidden: 16,
            kernel: 3,
            lambda_theta: 1e-3,
            lambda_phi: 1e-4,
            lambda_tv: 1e2,
            step_theta: 1e-4,
            step_phi: 1e-4,
            step_z: 1e-3,
            epochs: 400,
            optimizer: Optimizer::adam(),
            pretrain_spatial: PretrainConfig { epochs: 2000, ..PretrainConfig::default() },
            pretrain_temporal: PretrainConfig { epochs: 10000, step: 3e-3, ..PretrainConfig::default() },
            init: InitMode::Storm,
            operator: OperatorMode::Radial,
            seed: 0,
            data_scale: 1e3,
            checkpoint_every: 0,
            z_snapshot_every: 0,
            batch_frames: None,
            early_stopping: None,
            l1_include_bias: true,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_theta", self.lambda_theta), ("lambda_phi", self.lambda_phi), ("lambda_tv", self.lambda_tv)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        for (name, v) in [
            ("step_theta", self.step_theta),
            ("step_phi", self.step_phi),
            ("step_z", self.step_z),
            ("data_scale", self.data_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rank == 0 || self.latent_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("rank, latent_dim and hidden must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.batch_frames == Some(0) || self.early_stopping == Some(0) {
            return Err(Error::Config("batch_frames and early_stopping must be positive when set".into()));
        }
        self.pretrain_spatial.validate()?;
        self.pretrain_temporal.validate()
    }

    pub fn spatial_widths(&self) -> [usize; 5] {
        GeneratorNet::<f64>::spatial_widths(self.rank)
    }

    pub fn temporal_widths(&self) -> [usize; 5] {
        GeneratorNet::<f64>::temporal_widths(self.latent_dim, self.hidden, self.rank)
    }
}

/// Trainable state: spatial net θ, temporal net φ, latents `Z` and the fixed
/// spatial seed `U₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeblurState<T: Real> {
    pub theta: GeneratorNet<T>,
    pub phi: GeneratorNet<T>,
    pub z: LatentTrajectory<T>,
    pub seed: SpatialSeed<T>,
}

impl<T: Real> DeblurState<T> {
    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.phi.is_finite() && self.seed.tensor.is_finite() && self.z.z.iter().all(|v| v.is_finite())
    }

    /// Checks the pieces against each other and `cfg`.
    pub fn check(&self, cfg: &ReconConfig, n_frames: usize) -> Result<()> {
        let want = [
            ("theta", self.theta.widths(), cfg.spatial_widths()),
            ("phi", self.phi.widths(), cfg.temporal_widths()),
        ];
        for (name, got, expected) in want {
            if got != expected {
                return Err(Error::shape("DeblurState", format!("{name} widths {got:?}, config expects {expected:?}")));
            }
        }
        if self.z.dim() != cfg.latent_dim || self.z.n_frames() != n_frames {
            return Err(Error::shape(
                "DeblurState",
                format!("Z is {}x{}, expected {}x{n_frames}", self.z.dim(), self.z.n_frames(), cfg.latent_dim),
            ));
        }
        if self.seed.rank() != cfg.rank {
            return Err(Error::shape("DeblurState", format!("seed rank {} vs rank {}", self.seed.rank(), cfg.rank)));
        }
        Ok(())
    }

    pub fn penalties(&self, include_bias: bool) -> Penalties {
        Penalties {
            l1_theta: l1_weight_norm_with(&self.theta, include_bias).as_f64(),
            l1_phi: l1_weight_norm_with(&self.phi, include_bias).as_f64(),
            tv_z: temporal_tv(self.z.z.view()).as_f64(),
        }
    }
}

/// Unweighted regularizer values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub l1_theta: f64,
    pub l1_phi: f64,
    pub tv_z: f64,
}

/// `Σ_{i≥1} Σ_k |Z[k,i] − Z[k,i−1]|`
pub fn temporal_tv<T: Real>(z: ArrayView2<'_, T>) -> T {
    let mut acc = T::zero();
    for row in z.rows() {
        for w in row.windows(2) {
            acc = acc + num_traits::Float::abs(w[1] - w[0]);
        }
    }
    acc
}

fn sign0<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Subgradient of [`temporal_tv`] with `sign(0) = 0`.
pub fn temporal_tv_subgradient<T: Real>(z: ArrayView2<'_, T>) -> Array2<T> {
    let (d, n) = z.dim();
    let mut g = Array2::zeros((d, n));
    for k in 0..d {
        for i in 1..n {
            let s = sign0(z[[k, i]] - z[[k, i - 1]]);
            g[[k, i]] = g[[k, i]] + s;
            g[[k, i - 1]] = g[[k, i - 1]] - s;
        }
    }
    g
}

/// Frame from a single latent vector, with the temporal net seeing a
/// one-frame sequence (its zero-padded context).
pub fn frame_synthesis<T: Real>(
    u: ArrayView2<'_, Cplx<T>>,
    phi: &GeneratorNet<T>,
    z: ArrayView1<'_, T>,
    h: usize,
    w: usize,
) -> Result<Array2<Cplx<T>>> {
    if z.len() != phi.in_channels() {
        return Err(Error::shape("frame_synthesis", format!("latent of length {} for a {}-input net", z.len(), phi.in_channels())));
    }
    let single = LatentTrajectory::new(z.to_owned().insert_axis(ndarray::Axis(1)))?;
    let v = temporal_forward(phi, &single)?;
    check_u(u, v.ncols(), h, w)?;
    Ok(synthesize(u, v.row(0), h, w))
}

/// Stored frame `i`: the full temporal net on `Z`, column `i`.
pub fn stored_frame<T: Real>(
    u: ArrayView2<'_, Cplx<T>>,
    phi: &GeneratorNet<T>,
    z: &LatentTrajectory<T>,
    i: usize,
    h: usize,
    w: usize,
) -> Result<Array2<Cplx<T>>> {
    if i >= z.n_frames() {
        return Err(Error::shape("stored_frame", format!("frame {i} of {}", z.n_frames())));
    }
    let v = temporal_forward(phi, z)?;
    check_u(u, v.ncols(), h, w)?;
    Ok(synthesize(u, v.row(i), h, w))
}

fn check_u<T: Real>(u: ArrayView2<'_, Cplx<T>>, r: usize, h: usize, w: usize) -> Result<()> {
    if u.dim() != (h * w, r) {
        return Err(Error::shape("frame synthesis", format!("U is {:?}, expected {}x{r}", u.dim(), h * w)));
    }
    Ok(())
}

/// One row of the training trace, describing the state after `epoch` updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    /// `‖𝒜X − B‖²`
    pub data_loss: f64,
    pub l1_theta: f64,
    pub l1_phi: f64,
    pub tv_z: f64,
    pub ser_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZSnapshot {
    pub epoch: usize,
    pub z: Array2<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub entries: Vec<TraceEntry>,
    pub z_snapshots: Vec<ZSnapshot>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,data_loss,l1_theta,l1_phi,tv_z,ser_db\n");
        for e in &self.entries {
            let ser = e.ser_db.map(crate::metrics::format_value).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{ser}\n",
                e.epoch, e.data_loss, e.l1_theta, e.l1_phi, e.tv_z
            ));
        }
        out
    }

    pub fn ser_curve(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.ser_db).collect()
    }

    /// `(epoch, SER)` of the best entry; earliest wins ties.
    pub fn peak_ser(&self) -> Option<(usize, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.ser_db.map(|s| (e.epoch, s)))
            .fold(None, |best, (ep, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((ep, s)),
            })
    }

    pub fn final_ser(&self) -> Option<f64> {
        self.entries.last().and_then(|e| e.ser_db)
    }

    /// First epoch whose SER reaches `target`.
    pub fn first_epoch_reaching(&self, target: f64) -> Option<usize> {
        self.entries.iter().find(|e| e.ser_db.is_some_and(|s| s >= target)).map(|e| e.epoch)
    }
}

/// Per-row RMS of a latent trajectory.
pub fn latent_rms<T: Real>(z: ArrayView2<'_, T>) -> Array1<f64> {
    z.rows().into_iter().map(|r| (r.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / r.len().max(1) as f64).sqrt()).collect()
}
