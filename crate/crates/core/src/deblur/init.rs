//! Starting points for the joint fit.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pretrain::{pretrain_spatial, pretrain_temporal};
use super::{DeblurState, InitMode, ReconConfig};
use crate::baselines::FactorPair;
use crate::error::{Error, Result};
use crate::generators::{GeneratorNet, LatentTrajectory, NetKind, SpatialSeed};
use crate::scalar::{Cplx, Real};

/// Residual threshold above which a component counts as new information.
const HARMONIC_THRESHOLD: f64 = 0.5;
const HARMONIC_DEGREE: usize = 3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub spatial_error: Option<f64>,
    pub temporal_error: Option<f64>,
    /// Baseline temporal components used as initial latents.
    pub latent_components: Vec<usize>,
}

/// Monomials of total degree `1..=deg` in `sel`, without repeats.
fn monomials(sel: &[Vec<f64>], deg: usize, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0; n]];
    let mut frontier: Vec<(usize, Vec<f64>)> = vec![(0, vec![1.0; n])];
    for _ in 0..deg {
        let mut next = Vec::new();
        for (start, base) in &frontier {
            for (k, s) in sel.iter().enumerate().skip(*start) {
                next.push((k, base.iter().zip(s).map(|(a, b)| a * b).collect::<Vec<f64>>()));
            }
        }
        out.extend(next.iter().map(|(_, v)| v.clone()));
        frontier = next;
    }
    out
}

fn regression_residual(target: &[f64], sel: &[Vec<f64>]) -> f64 {
    let n = target.len();
    let feats = monomials(sel, HARMONIC_DEGREE, n);
    let a = nalgebra::DMatrix::from_fn(n, feats.len(), |i, j| feats[j][i]);
    let b = nalgebra::DVector::from_column_slice(target);
    let norm = b.norm();
    if norm == 0.0 {
        return 0.0;
    }
    match a.clone().svd(true, true).solve(&b, 1e-10) {
        Ok(x) => (b - a * x).norm() / norm,
        Err(_) => 0.0,
    }
}

/// Picks `d` columns of `v` (frames × r) as latent coordinates. Columns are
/// scanned in order; constant columns are skipped and a column is accepted
/// when a cubic polynomial in the already chosen ones leaves more than half of
/// its norm unexplained, which rejects harmonics of a chosen component. If too
/// few pass, the remaining columns fill in order.
pub fn harmonic_select(v: ArrayView2<'_, f64>, d: usize) -> Vec<usize> {
    let n = v.nrows();
    let centred: Vec<Vec<f64>> = v
        .columns()
        .into_iter()
        .map(|c| {
            let m = c.mean().unwrap_or(0.0);
            c.iter().map(|x| x - m).collect()
        })
        .collect();
    let candidates: Vec<usize> = (0..v.ncols())
        .filter(|&j| {
            let raw = v.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            let c = centred[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            raw > 0.0 && c > 1e-8 * raw && n > 1
        })
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    for &j in &candidates {
        if chosen.len() == d {
            break;
        }
        let sel: Vec<Vec<f64>> = chosen.iter().map(|&k| centred[k].clone()).collect();
        if chosen.is_empty() || regression_residual(&centred[j], &sel) > HARMONIC_THRESHOLD {
            chosen.push(j);
        }
    }
    for &j in &candidates {
        if chosen.len() == d {
            break;
        }
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    chosen
}

/// Rescales each column pair so that every temporal column has unit RMS.
fn balance<T: Real>(f: &FactorPair<T>) -> (Array2<Cplx<T>>, Array2<T>) {
    let n = f.n_frames() as f64;
    let mut u = f.u.clone();
    let mut v = f.v.clone();
    for j in 0..f.rank() {
        let rms = (v.column(j).iter().map(|x| x.as_f64().powi(2)).sum::<f64>() / n).sqrt();
        if rms > 0.0 {
            let c = T::lit(rms);
            v.column_mut(j).mapv_inplace(|x| x / c);
            u.column_mut(j).mapv_inplace(|z| z * c);
        }
    }
    (u, v)
}

/// Builds the initial state from baseline factors. `Storm` and `Lowrank`
/// pretrain both generators on the balanced factors, with latents drawn from
/// the temporal components; `Random` keeps the random draws.
pub fn initialize<T: Real>(cfg: &ReconConfig, baseline: &FactorPair<T>, h: usize, w: usize) -> Result<(DeblurState<T>, InitReport)> {
    cfg.validate()?;
    if baseline.rank() != cfg.rank {
        return Err(Error::shape("initialize", format!("baseline rank {} vs configured {}", baseline.rank(), cfg.rank)));
    }
    let n_f = baseline.n_frames();
    let (u, v) = balance(baseline);
    let seed = SpatialSeed::from_factor(u.view(), h, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta = GeneratorNet::random(NetKind::Spatial, cfg.spatial_widths(), cfg.kernel, &mut rng)?;
    let phi = GeneratorNet::random(NetKind::Temporal, cfg.temporal_widths(), cfg.kernel, &mut rng)?;
    let random_z = LatentTrajectory::random(cfg.latent_dim, n_f, &mut rng);
    if cfg.init == InitMode::Random {
        let state = DeblurState { theta, phi, z: random_z, seed };
        return Ok((state, InitReport::default()));
    }
    let vf = v.mapv(|x| x.as_f64());
    let picks = harmonic_select(vf.view(), cfg.latent_dim);
    let mut z = Array2::zeros((cfg.latent_dim, n_f));
    for (k, &j) in picks.iter().enumerate() {
        let col = vf.column(j);
        let m = col.mean().unwrap_or(0.0);
        let rms = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n_f as f64).sqrt();
        for i in 0..n_f {
            z[[k, i]] = T::lit((col[i] - m) / rms);
        }
    }
    // Any rows left without a component keep their random draw.
    for k in picks.len()..cfg.latent_dim {
        z.row_mut(k).assign(&random_z.z.row(k));
    }
    let sp = pretrain_spatial(theta, &seed, u.view(), &cfg.pretrain_spatial)?;
    let tp = pretrain_temporal(phi, LatentTrajectory::new(z)?, v.view(), &cfg.pretrain_temporal)?;
    log::info!("pretraining: spatial error {:.3e}, temporal error {:.3e}", sp.rel_error, tp.rel_error);
    let report = InitReport {
        spatial_error: Some(sp.rel_error),
        temporal_error: Some(tp.rel_error),
        latent_components: picks,
    };
    Ok((DeblurState { theta: sp.net, phi: tp.net, z: tp.z, seed }, report))
}
