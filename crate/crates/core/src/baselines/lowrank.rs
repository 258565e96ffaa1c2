use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{frob_sq, re_inner, real_gram, sym_max_eig, to_complex, FactorPair, Recon};
use crate::error::{Error, Result};
use crate::mri::{casorati, GramDataTerm, KSpaceDataset};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowRankConfig {
    pub rank: usize,
    pub lambda: f64,
    pub iters: usize,
    /// Multiple of the blockwise Lipschitz step `1/L`. Values below 2 make
    /// every block update a descent step.
    pub step_scale: f64,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        Self { rank: 30, lambda: 0.0, iters: 100, step_scale: 1.0 }
    }
}

/// Spectral initialization: right singular vectors of the real-stacked
/// back-projection `[Re Y; Im Y]`, with a least-squares amplitude fit and
/// balanced column norms.
pub(crate) fn spectral_init<T: Real>(term: &GramDataTerm<T>, r: usize) -> Result<FactorPair<T>> {
    let y = term.back_projection_matrix();
    let n_f = y.ncols();
    let eig = real_gram(y.view()).symmetric_eigen();
    let mut order: Vec<usize> = (0..n_f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut v = Array2::<T>::zeros((n_f, r));
    for (j, &k) in order.iter().take(r).enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n_f {
            v[[i, j]] = T::lit(sign * col[i]);
        }
    }
    let mut u = y.dot(&to_complex(v.view()));
    let x0 = casorati(u.view(), v.view());
    let nx = term.apply_normal(x0.view())?;
    let curvature = re_inner(x0.view(), nx.view());
    if curvature > 0.0 {
        let alpha = T::lit(re_inner(x0.view(), y.view()) / curvature);
        u.mapv_inplace(|z| z * alpha);
    }
    for j in 0..r {
        let norm = u.column(j).iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>().sqrt();
        if norm > 0.0 {
            let c = norm.sqrt();
            u.column_mut(j).mapv_inplace(|z| z / T::lit(c));
            v.column_mut(j).mapv_inplace(|x| x * T::lit(c));
        }
    }
    FactorPair::new(u, v)
}

fn objective<T: Real>(data_loss: T, f: &FactorPair<T>, lambda: f64) -> f64 {
    let reg = frob_sq(f.u.view()) + f.v.iter().map(|x| x.as_f64().powi(2)).sum::<f64>();
    data_loss.as_f64() + lambda * reg
}

/// `min ‖𝒜(UVᵀ) − B‖² + λ(‖U‖²_F + ‖V‖²_F)` by alternating gradient steps.
pub fn lowrank_recon<T: Real>(dataset: &KSpaceDataset<T>, cfg: &LowRankConfig) -> Result<Recon<T>> {
    let term = GramDataTerm::new(dataset.operator()?, &dataset.samples)?;
    lowrank_from_term(&term, cfg)
}

pub fn lowrank_from_term<T: Real>(term: &GramDataTerm<T>, cfg: &LowRankConfig) -> Result<Recon<T>> {
    let n_f = term.n_frames();
    if cfg.rank == 0 || cfg.rank > n_f {
        return Err(Error::Config(format!("rank {} must lie in 1..={n_f}", cfg.rank)));
    }
    if !(cfg.lambda >= 0.0) || !(cfg.step_scale > 0.0) {
        return Err(Error::Config("lambda must be nonnegative and step_scale positive".into()));
    }
    let nu = term.normal_bound().as_f64();
    let mut f = spectral_init(term, cfg.rank)?;
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let mut rising = 0usize;
    let two_lambda = T::lit(2.0 * cfg.lambda);
    for sweep in 0..=cfg.iters {
        let g = term.evaluate(f.u.view(), f.v.view())?;
        let obj = objective(g.loss, &f, cfg.lambda);
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!("low-rank objective at sweep {sweep}")));
        }
        if let Some(&prev) = history.last() {
            rising = if obj > prev { rising + 1 } else { 0 };
            if rising >= 10 {
                return Err(Error::Diverged(format!(
                    "low-rank objective rose for 10 consecutive sweeps, reaching {obj:.6e} at sweep {sweep}"
                )));
            }
        }
        history.push(obj);
        if sweep == cfg.iters {
            break;
        }
        let vv = nalgebra::DMatrix::from_fn(cfg.rank, cfg.rank, |a, b| {
            f.v.column(a).dot(&f.v.column(b)).as_f64()
        });
        let step_u = T::lit(cfg.step_scale / (2.0 * nu * sym_max_eig(&vv) + 2.0 * cfg.lambda));
        let mut gu = g.g_u;
        gu.zip_mut_with(&f.u, |gv, &uv| *gv = *gv + uv * two_lambda);
        f.u.zip_mut_with(&gu, |uv, &gv| *uv = *uv - gv * step_u);

        let g = term.evaluate(f.u.view(), f.v.view())?;
        let step_v = T::lit(cfg.step_scale / (2.0 * nu * sym_max_eig(&real_gram(f.u.view())) + 2.0 * cfg.lambda));
        let mut gv = g.g_v;
        gv.zip_mut_with(&f.v, |gv, &vv| *gv = *gv + vv * two_lambda);
        f.v.zip_mut_with(&gv, |vv, &g| *vv = *vv - g * step_v);
    }
    Ok(Recon { factors: f, history, converged: true })
}

