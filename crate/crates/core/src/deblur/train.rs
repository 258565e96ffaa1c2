//! The joint proximal-gradient fit of θ, φ and `Z` to the measurements.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::GroupState;
use super::{temporal_tv_subgradient, DeblurState, Penalties, ReconConfig, TraceEntry, TrainTrace, ZSnapshot};
use crate::baselines::FactorPair;
use crate::error::{Error, Result};
use crate::generators::{GeneratorNet, SpatialPass, TemporalPass};
use crate::metrics::mean_frame_ser;
use crate::mri::{casorati, GramDataTerm};
use crate::phantom::ImageSeries;
use crate::scalar::{Cplx, Real};

#[derive(Clone, Debug)]
pub struct Checkpoint<T: Real> {
    pub epoch: usize,
    pub state: DeblurState<T>,
    pub penalties: Penalties,
}

#[derive(Clone, Debug)]
pub struct DeblurOutcome<T: Real> {
    pub state: DeblurState<T>,
    pub factors: FactorPair<T>,
    pub trace: TrainTrace,
    pub stopped_early: bool,
}

struct Optimizers<T: Real> {
    theta: GroupState<T>,
    phi: GroupState<T>,
    z: GroupState<T>,
}

fn sizes<T: Real>(net: &GeneratorNet<T>) -> Vec<usize> {
    net.params().map(|p| p.len()).collect()
}

fn step_net<T: Real>(net: &mut GeneratorNet<T>, grads: &GeneratorNet<T>, st: &mut GroupState<T>, step: T, l1: T, include_bias: bool) {
    st.tick();
    for (i, (p, g)) in net.params_mut().zip(grads.params()).enumerate() {
        // Parameters alternate weights, bias.
        let lam = if i % 2 == 1 && !include_bias { T::zero() } else { l1 };
        st.update(i, p.data_mut(), g.data(), step, lam);
    }
}

/// Gradients of the smooth part `scale·‖𝒜X − B‖²` with respect to θ, φ and `Z`.
#[derive(Clone, Debug)]
pub struct SmoothGradient<T: Real> {
    /// `scale·‖𝒜X − B‖²`
    pub value: T,
    pub theta: GeneratorNet<T>,
    pub phi: GeneratorNet<T>,
    pub z: Array2<T>,
}

fn backprop<T: Real>(
    sp: &SpatialPass<T>,
    tp: &TemporalPass<T>,
    g_u: Array2<Cplx<T>>,
    g_v: Array2<T>,
    scale: T,
) -> Result<(GeneratorNet<T>, GeneratorNet<T>, Array2<T>)> {
    let g_theta = sp.backward(g_u.mapv(|z| z * scale).view())?;
    let (g_phi, g_z) = tp.backward(g_v.mapv(|x| x * scale).view())?;
    Ok((g_theta, g_phi, g_z))
}

/// Evaluates the weighted data term of `state` and its gradients.
pub fn smooth_gradient<T: Real>(term: &GramDataTerm<T>, state: &DeblurState<T>, scale: T) -> Result<SmoothGradient<T>> {
    let sp = SpatialPass::new(&state.theta, &state.seed)?;
    let tp = TemporalPass::new(&state.phi, &state.z)?;
    let dc = term.evaluate(sp.u().view(), tp.v().view())?;
    let (theta, phi, z) = backprop(&sp, &tp, dc.g_u, dc.g_v, scale)?;
    Ok(SmoothGradient { value: dc.loss * scale, theta, phi, z })
}

/// One proximal-gradient update from recorded passes and data gradients.
#[allow(clippy::too_many_arguments)]
fn update<T: Real>(
    state: &mut DeblurState<T>,
    sp: &SpatialPass<T>,
    tp: &TemporalPass<T>,
    g_u: Array2<Cplx<T>>,
    g_v: Array2<T>,
    scale: T,
    cfg: &ReconConfig,
    opt: &mut Optimizers<T>,
) -> Result<()> {
    let (g_theta, g_phi, mut g_z) = backprop(sp, tp, g_u, g_v, scale)?;
    if cfg.lambda_tv > 0.0 {
        let lam = T::lit(cfg.lambda_tv);
        g_z.zip_mut_with(&temporal_tv_subgradient(state.z.z.view()), |g, &s| *g = *g + lam * s);
    }
    step_net(&mut state.theta, &g_theta, &mut opt.theta, T::lit(cfg.step_theta), T::lit(cfg.lambda_theta), cfg.l1_include_bias);
    step_net(&mut state.phi, &g_phi, &mut opt.phi, T::lit(cfg.step_phi), T::lit(cfg.lambda_phi), cfg.l1_include_bias);
    opt.z.tick();
    let gz = g_z.as_standard_layout().into_owned();
    opt.z.update(0, state.z.z.as_slice_mut().expect("standard layout latents"), gz.as_slice().expect("standard layout"), T::lit(cfg.step_z), T::zero());
    Ok(())
}

/// Absolute weight of the data term: `data_scale / ‖B‖²`.
pub fn data_weight<T: Real>(term: &GramDataTerm<T>, cfg: &ReconConfig) -> Result<T> {
    let energy = term.data_energy().as_f64();
    if !(energy > 0.0) {
        return Err(Error::Degenerate("measurements have zero energy".into()));
    }
    Ok(T::lit(cfg.data_scale / energy))
}

/// Runs `cfg.epochs` epochs from `init`. The trace holds one entry per epoch
/// boundary (0 ..= epochs). `reference` enables the SER column; checkpoints
/// are handed to `on_checkpoint` as they are taken. A non-finite loss or
/// penalty aborts with an error naming the last checkpoint epoch.
pub fn reconstruct<T: Real>(
    term: &GramDataTerm<T>,
    cfg: &ReconConfig,
    init: DeblurState<T>,
    reference: Option<&ImageSeries<T>>,
    on_checkpoint: &mut dyn FnMut(&Checkpoint<T>) -> Result<()>,
) -> Result<DeblurOutcome<T>> {
    cfg.validate()?;
    let n_f = term.n_frames();
    init.check(cfg, n_f)?;
    let (h, w) = term.operator().dim();
    if init.seed.dim() != (h, w) {
        return Err(Error::shape("reconstruct", format!("seed is {:?}, data is {h}x{w}", init.seed.dim())));
    }
    if let Some(r) = reference {
        if r.n_frames() != n_f || r.dim() != (h, w) {
            return Err(Error::shape("reconstruct", "reference series does not match the data".to_string()));
        }
    }
    let scale = data_weight(term, cfg)?;
    let energy = term.data_energy().as_f64();
    let mut state = init;
    if !state.z.z.is_standard_layout() {
        state.z.z = state.z.z.as_standard_layout().into_owned();
    }
    let mut opt = Optimizers {
        theta: GroupState::new(cfg.optimizer, &sizes(&state.theta)),
        phi: GroupState::new(cfg.optimizer, &sizes(&state.phi)),
        z: GroupState::new(cfg.optimizer, &[state.z.z.len()]),
    };
    let mut order: Vec<usize> = (0..n_f).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut trace = TrainTrace::default();
    let mut last_checkpoint: Option<usize> = None;
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut stopped_early = false;
    let mut factors = None;

    for epoch in 0..=cfg.epochs {
        let sp = SpatialPass::new(&state.theta, &state.seed)?;
        let tp = TemporalPass::new(&state.phi, &state.z)?;
        let (u, v) = (sp.u(), tp.v());
        let dc = term.evaluate(u.view(), v.view())?;
        let penalties = state.penalties(cfg.l1_include_bias);
        let ser_db = match reference {
            Some(r) => Some(mean_frame_ser(&ImageSeries::from_casorati(casorati(u.view(), v.view()).view(), h, w, r.frame_dt), r)?),
            None => None,
        };
        let data_loss = dc.loss.as_f64();
        let finite = data_loss.is_finite()
            && penalties.l1_theta.is_finite()
            && penalties.l1_phi.is_finite()
            && penalties.tv_z.is_finite()
            && ser_db.is_none_or(|s| !s.is_nan());
        if !finite {
            let last = last_checkpoint.map_or("none".to_string(), |e| e.to_string());
            return Err(Error::NonFinite(format!("training loss at epoch {epoch} (last checkpoint: {last})")));
        }
        trace.entries.push(TraceEntry {
            epoch,
            data_loss,
            l1_theta: penalties.l1_theta,
            l1_phi: penalties.l1_phi,
            tv_z: penalties.tv_z,
            ser_db,
        });
        log::debug!("epoch {epoch}: data {data_loss:.6e} ser {ser_db:?}");
        if cfg.z_snapshot_every > 0 && epoch % cfg.z_snapshot_every == 0 {
            trace.z_snapshots.push(ZSnapshot { epoch, z: state.z.z.mapv(|x| x.as_f64()) });
        }
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            on_checkpoint(&Checkpoint { epoch, state: state.clone(), penalties })?;
            last_checkpoint = Some(epoch);
        }
        factors = Some((u, v));
        let score = match ser_db {
            Some(s) => s,
            None => {
                -(cfg.data_scale * data_loss / energy
                    + cfg.lambda_theta * penalties.l1_theta
                    + cfg.lambda_phi * penalties.l1_phi
                    + cfg.lambda_tv * penalties.tv_z)
            }
        };
        if score > best {
            best = score;
            best_epoch = epoch;
        }
        if epoch == cfg.epochs {
            break;
        }
        if let Some(patience) = cfg.early_stopping {
            if epoch - best_epoch >= patience {
                stopped_early = true;
                break;
            }
        }
        match cfg.batch_frames {
            None => update(&mut state, &sp, &tp, dc.g_u, dc.g_v, scale, cfg, &mut opt)?,
            Some(b) => {
                drop((sp, tp));
                order.shuffle(&mut rng);
                for chunk in order.chunks(b) {
                    let sp = SpatialPass::new(&state.theta, &state.seed)?;
                    let tp = TemporalPass::new(&state.phi, &state.z)?;
                    let dc = term.evaluate_frames(sp.u().view(), tp.v().view(), chunk)?;
                    update(&mut state, &sp, &tp, dc.g_u, dc.g_v, scale, cfg, &mut opt)?;
                }
            }
        }
    }
    let (u, v) = factors.expect("at least one epoch is recorded");
    Ok(DeblurOutcome { state, factors: FactorPair::new(u, v)?, trace, stopped_early })
}
