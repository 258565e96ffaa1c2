//! Fitting the generators to baseline factors before the joint fit.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::optim::{GroupState, Optimizer};
use crate::error::{Error, Result};
use crate::generators::{GeneratorNet, LatentTrajectory, SpatialPass, SpatialSeed, TemporalPass};
use crate::scalar::{Cplx, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub step: f64,
    pub optimizer: Optimizer,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 200, step: 1e-3, optimizer: Optimizer::adam() }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!("pretrain step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome<T: Real> {
    pub net: GeneratorNet<T>,
    /// `‖𝒢(input) − target‖_F / ‖target‖_F` after the last update (absolute
    /// error for a zero target).
    pub rel_error: f64,
    /// Normalized squared error before each update.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TemporalPretrainOutcome<T: Real> {
    pub net: GeneratorNet<T>,
    pub z: LatentTrajectory<T>,
    pub rel_error: f64,
    pub history: Vec<f64>,
}

fn sizes<T: Real>(net: &GeneratorNet<T>) -> Vec<usize> {
    net.params().map(|p| p.len()).collect()
}

fn step_net<T: Real>(net: &mut GeneratorNet<T>, grads: &GeneratorNet<T>, state: &mut GroupState<T>, step: T, l1: T) {
    for (i, (p, g)) in net.params_mut().zip(grads.params()).enumerate() {
        state.update(i, p.data_mut(), g.data(), step, l1);
    }
}

fn norm_of(target_sq: f64) -> f64 {
    if target_sq > 0.0 {
        target_sq
    } else {
        1.0
    }
}

/// Minimizes `‖𝒢_θ(U₀) − U_target‖²_F`.
pub fn pretrain_spatial<T: Real>(
    mut net: GeneratorNet<T>,
    seed: &SpatialSeed<T>,
    target: ArrayView2<'_, Cplx<T>>,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome<T>> {
    cfg.validate()?;
    if target.ncols() != seed.rank() || target.nrows() != seed.dim().0 * seed.dim().1 {
        return Err(Error::shape("pretrain_spatial", format!("target {:?} for a rank-{} seed", target.dim(), seed.rank())));
    }
    let scale = norm_of(target.iter().map(|z| z.norm_sqr().as_f64()).sum());
    let inv = T::lit(1.0 / scale);
    let mut state = GroupState::new(cfg.optimizer, &sizes(&net));
    let mut history = Vec::with_capacity(cfg.epochs);
    let residual = |u: &Array2<Cplx<T>>| -> Result<(Array2<Cplx<T>>, f64)> {
        let d = u - &target;
        let loss = d.iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>() / scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("spatial pretraining loss".into()));
        }
        Ok((d, loss))
    };
    for _ in 0..cfg.epochs {
        let pass = SpatialPass::new(&net, seed)?;
        let (d, loss) = residual(&pass.u())?;
        history.push(loss);
        let g = d.mapv(|z| z * (T::lit(2.0) * inv));
        let grads = pass.backward(g.view())?;
        state.tick();
        step_net(&mut net, &grads, &mut state, T::lit(cfg.step), T::zero());
    }
    let (_, loss) = residual(&crate::generators::spatial_forward(&net, seed)?)?;
    Ok(PretrainOutcome { net, rel_error: loss.sqrt(), history })
}

/// Minimizes `‖𝒢_φ(Z) − V_target‖²_F` jointly over φ and `Z`.
pub fn pretrain_temporal<T: Real>(
    mut net: GeneratorNet<T>,
    mut z: LatentTrajectory<T>,
    target: ArrayView2<'_, T>,
    cfg: &PretrainConfig,
) -> Result<TemporalPretrainOutcome<T>> {
    cfg.validate()?;
    if target.dim() != (z.n_frames(), net.out_channels()) {
        return Err(Error::shape(
            "pretrain_temporal",
            format!("target {:?}, expected {}x{}", target.dim(), z.n_frames(), net.out_channels()),
        ));
    }
    if !z.z.is_standard_layout() {
        z.z = z.z.as_standard_layout().into_owned();
    }
    let scale = norm_of(target.iter().map(|v| v.as_f64().powi(2)).sum());
    let inv = T::lit(1.0 / scale);
    let mut state = GroupState::new(cfg.optimizer, &sizes(&net));
    let mut z_state = GroupState::new(cfg.optimizer, &[z.z.len()]);
    let mut history = Vec::with_capacity(cfg.epochs);
    let residual = |v: &Array2<T>| -> Result<(Array2<T>, f64)> {
        let d = v - &target;
        let loss = d.iter().map(|x| x.as_f64().powi(2)).sum::<f64>() / scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("temporal pretraining loss".into()));
        }
        Ok((d, loss))
    };
    let step = T::lit(cfg.step);
    for _ in 0..cfg.epochs {
        let pass = TemporalPass::new(&net, &z)?;
        let (d, loss) = residual(&pass.v())?;
        history.push(loss);
        let g = d.mapv(|x| x * T::lit(2.0) * inv);
        let (grads, gz) = pass.backward(g.view())?;
        state.tick();
        step_net(&mut net, &grads, &mut state, step, T::zero());
        z_state.tick();
        let gz = gz.as_standard_layout().to_owned();
        let zs = z.z.as_slice_mut().expect("standard layout latents");
        z_state.update(0, zs, gz.as_slice().expect("standard layout"), step, T::zero());
    }
    let (_, loss) = residual(&crate::generators::temporal_forward(&net, &z)?)?;
    Ok(TemporalPretrainOutcome { net, z, rel_error: loss.sqrt(), history })
}
