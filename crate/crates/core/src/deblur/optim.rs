//! First-order updates with an optional ℓ1 proximal step.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Optimizer {
    /// Fixed-step gradient descent.
    #[default]
    Gd,
    /// Adaptive moments. The ℓ1 prox uses the same diagonal preconditioner,
    /// so its threshold is `step·min(λ / (√v̂ + eps), 1)`.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Elementwise soft threshold: `sign(x)·max(|x| − τ, 0)`.
#[inline]
pub fn soft_threshold<T: Real>(x: T, tau: T) -> T {
    let a = num_traits::Float::abs(x) - tau;
    if a > T::zero() {
        a * x.signum()
    } else {
        T::zero()
    }
}

/// Optimizer state for one parameter group stored as a list of flat slices.
#[derive(Clone, Debug)]
pub struct GroupState<T: Real> {
    rule: Optimizer,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Real> GroupState<T> {
    pub fn new(rule: Optimizer, sizes: &[usize]) -> Self {
        let alloc = || sizes.iter().map(|&n| vec![T::zero(); n]).collect::<Vec<_>>();
        let (m, v) = match rule {
            Optimizer::Gd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (alloc(), alloc()),
        };
        Self { rule, m, v, t: 0 }
    }

    /// Starts a new step; call once per update of the whole group.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    /// Updates slice `idx` in place: smooth step followed by the prox of
    /// `l1·‖·‖₁` when `l1 > 0`.
    pub fn update(&mut self, idx: usize, param: &mut [T], grad: &[T], step: T, l1: T) {
        match self.rule {
            Optimizer::Gd => {
                let tau = step * l1;
                for (p, &g) in param.iter_mut().zip(grad) {
                    let x = *p - step * g;
                    *p = if l1 > T::zero() { soft_threshold(x, tau) } else { x };
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let c1 = T::one() - T::lit(beta1.powi(self.t));
                let c2 = T::one() - T::lit(beta2.powi(self.t));
                let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
                for (((p, &g), mi), vi) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = b1 * *mi + (T::one() - b1) * g;
                    *vi = b2 * *vi + (T::one() - b2) * g * g;
                    let denom = (*vi / c2).sqrt() + eps;
                    let x = *p - step * (*mi / c1) / denom;
                    // preconditioned threshold, capped like the smooth step
                    *p = if l1 > T::zero() { soft_threshold(x, step * (l1 / denom).min(T::one())) } else { x };
                }
            }
        }
    }
}
