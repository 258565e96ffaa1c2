use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::solve::conjugate_residual;
use super::{to_complex, FactorPair, Recon};
use crate::error::{Error, Result};
use crate::mri::{casorati, GramDataTerm, KSpaceDataset};
use crate::scalar::{Cplx, Real};

/// Weights are snapped to multiples of 2⁻⁴⁰ so degree sums, and hence the
/// Laplacian row sums, are exact in f64 for graphs up to 2¹² frames.
const WEIGHT_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

/// Navigator-driven graph Laplacian `L = D − W` with its eigendecomposition
/// computed on first use.
#[derive(Debug)]
pub struct GraphLaplacian {
    weights: Array2<f64>,
    laplacian: Array2<f64>,
    sigma: f64,
    eigen: OnceLock<(Vec<f64>, Array2<f64>)>,
}

impl Clone for GraphLaplacian {
    fn clone(&self) -> Self {
        Self {
            weights: self.weights.clone(),
            laplacian: self.laplacian.clone(),
            sigma: self.sigma,
            eigen: self.eigen.clone(),
        }
    }
}

impl GraphLaplacian {
    /// Builds `L` from nonnegative symmetric weights; the diagonal of `W` is ignored.
    pub fn from_weights(weights: Array2<f64>, sigma: f64) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::shape("GraphLaplacian", format!("weights {:?} are not square", weights.dim())));
        }
        let mut w = weights.mapv(|x| (x / WEIGHT_QUANTUM).round() * WEIGHT_QUANTUM);
        for i in 0..n {
            w[[i, i]] = 0.0;
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Degenerate("graph weights must be finite and nonnegative".into()));
        }
        if (0..n).any(|i| (0..i).any(|j| w[[i, j]] != w[[j, i]])) {
            return Err(Error::Degenerate("graph weights must be symmetric".into()));
        }
        let mut laplacian = w.mapv(|x| -x);
        for i in 0..n {
            laplacian[[i, i]] = w.row(i).sum();
        }
        Ok(Self { weights: w, laplacian, sigma, eigen: OnceLock::new() })
    }

    pub fn n_frames(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn laplacian(&self) -> &Array2<f64> {
        &self.laplacian
    }

    /// Kernel bandwidth used to build the weights.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Eigenvalues ascending with matching unit eigenvectors as columns. Each
    /// vector's largest-magnitude entry is positive.
    pub fn eigen(&self) -> &(Vec<f64>, Array2<f64>) {
        self.eigen.get_or_init(|| {
            let n = self.n_frames();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.laplacian[[i, j]]);
            let eig = m.symmetric_eigen();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
            let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let mut vectors = Array2::zeros((n, n));
            for (j, &k) in order.iter().enumerate() {
                let col = eig.eigenvectors.column(k);
                let mut pivot = 0usize;
                for i in 1..n {
                    if col[i].abs() > col[pivot].abs() {
                        pivot = i;
                    }
                }
                let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
                for i in 0..n {
                    vectors[[i, j]] = sign * col[i];
                }
            }
            (values, vectors)
        })
    }
}

/// Gaussian kNN graph on navigator features. `sigma_kernel = None` uses the
/// median pairwise distance; `k_nn = None` keeps the complete graph.
pub fn storm_laplacian<T: Real>(
    dataset: &KSpaceDataset<T>,
    sigma_kernel: Option<f64>,
    k_nn: Option<usize>,
) -> Result<GraphLaplacian> {
    let op = dataset.operator()?;
    let feats = dataset.navigator_features(&op)?;
    let n = feats.len();
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let dij = feats[i]
                .iter()
                .zip(&feats[j])
                .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = dij;
            d[[j, i]] = dij;
        }
    }
    let sigma = match sigma_kernel {
        Some(s) if !(s > 0.0) => return Err(Error::Config(format!("kernel bandwidth must be positive, got {s}"))),
        Some(s) => s,
        None => median_offdiag(&d),
    };
    // a zero median means most frames coincide; any positive bandwidth keeps them at weight 1
    let sigma = if sigma > 0.0 { sigma } else { 1.0 };
    let mut w = d.mapv(|x| (-(x * x) / (sigma * sigma)).exp());
    if let Some(k) = k_nn {
        if k == 0 {
            return Err(Error::Config("k_nn must be at least 1".into()));
        }
        let mut keep = Array2::<bool>::from_elem((n, n), false);
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| d[[i, a]].total_cmp(&d[[i, b]]).then(a.cmp(&b)));
            for &j in order.iter().take(k) {
                keep[[i, j]] = true;
                keep[[j, i]] = true;
            }
        }
        w.zip_mut_with(&keep, |x, &k| {
            if !k {
                *x = 0.0;
            }
        });
    }
    GraphLaplacian::from_weights(w, sigma)
}

fn median_offdiag(d: &Array2<f64>) -> f64 {
    let n = d.nrows();
    let mut vals: Vec<f64> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| d[[i, j]]).collect();
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StormConfig {
    pub rank: usize,
    pub lambda: f64,
    pub iters: usize,
    pub tol: f64,
    /// `None` uses the median pairwise navigator distance.
    pub sigma_kernel: Option<f64>,
    pub k_nn: Option<usize>,
}

impl Default for StormConfig {
    fn default() -> Self {
        Self { rank: 30, lambda: 1.0, iters: 60, tol: 1e-6, sigma_kernel: None, k_nn: Some(5) }
    }
}

/// `V` = the `r` smallest Laplacian eigenvectors; `U` solves
/// `min ‖𝒜(UVᵀ) − B‖² + λ Σ_j σ_j ‖u_j‖²` by conjugate residuals.
pub fn storm_recon<T: Real>(dataset: &KSpaceDataset<T>, laplacian: &GraphLaplacian, cfg: &StormConfig) -> Result<Recon<T>> {
    let term = GramDataTerm::new(dataset.operator()?, &dataset.samples)?;
    storm_from_term(&term, laplacian, cfg)
}

pub fn storm_from_term<T: Real>(term: &GramDataTerm<T>, laplacian: &GraphLaplacian, cfg: &StormConfig) -> Result<Recon<T>> {
    let n_f = term.n_frames();
    if laplacian.n_frames() != n_f {
        return Err(Error::shape("storm_recon", format!("{}-frame graph for {n_f} frames", laplacian.n_frames())));
    }
    if cfg.rank == 0 || cfg.rank > n_f {
        return Err(Error::Config(format!("rank {} must lie in 1..={n_f}", cfg.rank)));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::Config("lambda must be nonnegative".into()));
    }
    let (values, vectors) = laplacian.eigen();
    let r = cfg.rank;
    let v = Array2::from_shape_fn((n_f, r), |(i, j)| T::lit(vectors[[i, j]]));
    let weights: Vec<T> = values[..r].iter().map(|&s| T::lit(cfg.lambda * s.max(0.0))).collect();
    let vc = to_complex(v.view());
    let rhs = term.back_projection_matrix().dot(&vc);
    let apply = |u: ArrayView2<'_, Cplx<T>>| -> Result<Array2<Cplx<T>>> {
        let x = casorati(u, v.view());
        let mut out = term.apply_normal(x.view())?.dot(&vc);
        for (j, &wj) in weights.iter().enumerate() {
            out.column_mut(j).zip_mut_with(&u.column(j), |o, &uv| *o = *o + uv * wj);
        }
        Ok(out)
    };
    let x0 = Array2::zeros(rhs.dim());
    let sol = conjugate_residual(apply, rhs.view(), x0, cfg.iters, cfg.tol)?;
    if !sol.converged {
        log::warn!(
            "SToRM U-solve stopped after {} iterations at relative residual {:.3e}",
            cfg.iters,
            sol.residuals.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(Recon { factors: FactorPair::new(sol.x, v)?, history: sol.residuals, converged: sol.converged })
}
