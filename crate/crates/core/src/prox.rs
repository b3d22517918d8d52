//! Closed-form proximal maps used by the primal-dual inner solver.
//!
//! The primal term is
//! `G(x) = δ_V(x) + (β/2)‖x − z‖² + B_min(x) + B_max(x)`, which separates
//! into scalar problems. Dual terms enter through `prox_{sF*}`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::regularizers::{Barrier, BoxSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProxGParams {
    /// Primal step `t > 0`.
    pub t: f64,
    /// Proximal weight `β ≥ 0`.
    pub beta: f64,
    /// Anchor `z^k`.
    pub anchor: Vec<f64>,
    pub bounds: BoxSet,
    pub barrier: Option<Barrier>,
}

impl ProxGParams {
    pub fn new(t: f64, beta: f64, anchor: Vec<f64>, bounds: BoxSet, barrier: Option<Barrier>) -> Result<Self> {
        if !(t > 0.0) || !(beta >= 0.0) {
            return Err(Error::Domain(alloc::format!("prox requires t > 0 and β ≥ 0, got t={t}, β={beta}")));
        }
        Ok(Self { t, beta, anchor, bounds, barrier })
    }

    /// `G(x)`, `+∞` outside `V`.
    pub fn g_value(&self, x: &[f64]) -> f64 {
        if !self.bounds.contains(x) {
            return f64::INFINITY;
        }
        let tether: f64 = x.iter().zip(&self.anchor).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.beta * tether + self.barrier.map_or(0.0, |b| b.total(x))
    }

    /// Scalar objective `G_i(v) + (1/2t)(v − x)²` minimised by component `i`
    /// of the prox.
    pub fn scalar_objective(&self, i: usize, x: f64, v: f64) -> f64 {
        if v < self.bounds.v_min || v > self.bounds.v_max {
            return f64::INFINITY;
        }
        let z = self.anchor[i];
        let mut val = 0.5 * self.beta * (v - z) * (v - z) + (v - x) * (v - x) / (2.0 * self.t);
        if let Some(b) = self.barrier {
            val += b.total(&[v]);
        }
        val
    }

    /// `prox_{tG}(x)`, dispatching on whether barriers are present.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self.barrier {
            None => prox_box_quadratic_into(self, x, out),
            Some(_) => prox_barrier_box_quadratic_into(self, x, out),
        }
    }
}

/// `proj_V((x/t + βz)/(1/t + β))` componentwise.
pub fn prox_box_quadratic(params: &ProxGParams, x: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; x.len()];
    prox_box_quadratic_into(params, x, &mut out);
    out
}

fn prox_box_quadratic_into(params: &ProxGParams, x: &[f64], out: &mut [f64]) {
    let it = 1.0 / params.t;
    let denom = it + params.beta;
    for ((o, &xi), &zi) in out.iter_mut().zip(x).zip(&params.anchor) {
        *o = params.bounds.project((it * xi + params.beta * zi) / denom);
    }
}

/// Barrier-aware prox. The branch is chosen by the position of the input
/// `x_i`; when the result lands in a different branch the exact minimiser is
/// found among the three clipped branch candidates.
pub fn prox_barrier_box_quadratic(params: &ProxGParams, x: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; x.len()];
    prox_barrier_box_quadratic_into(params, x, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Below,
    Inside,
    Above,
}

fn branch_of(b: &Barrier, v: f64) -> Branch {
    if v < b.sigma_min {
        Branch::Below
    } else if v > b.sigma_max {
        Branch::Above
    } else {
        Branch::Inside
    }
}

fn prox_barrier_box_quadratic_into(params: &ProxGParams, x: &[f64], out: &mut [f64]) {
    let Some(bar) = params.barrier else {
        return prox_box_quadratic_into(params, x, out);
    };
    let it = 1.0 / params.t;
    let beta = params.beta;
    let lmin2 = bar.l_min * bar.l_min;
    let lmax2 = bar.l_max * bar.l_max;
    let formula = |br: Branch, xi: f64, zi: f64| match br {
        Branch::Below => (lmin2 * bar.sigma_min + it * xi + beta * zi) / (lmin2 + it + beta),
        Branch::Inside => (it * xi + beta * zi) / (it + beta),
        Branch::Above => (lmax2 * bar.sigma_max + it * xi + beta * zi) / (lmax2 + it + beta),
    };
    for (i, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
        let zi = params.anchor[i];
        let br = branch_of(&bar, xi);
        let v = params.bounds.project(formula(br, xi, zi));
        if branch_of(&bar, v) == br {
            *o = v;
            continue;
        }
        let intervals = [
            (Branch::Below, f64::NEG_INFINITY, bar.sigma_min),
            (Branch::Inside, bar.sigma_min, bar.sigma_max),
            (Branch::Above, bar.sigma_max, f64::INFINITY),
        ];
        let mut best = (f64::INFINITY, v);
        for (b, lo, hi) in intervals {
            let lo = lo.max(params.bounds.v_min);
            let hi = hi.min(params.bounds.v_max);
            if lo > hi {
                continue;
            }
            let c = formula(b, xi, zi).max(lo).min(hi);
            let val = params.scalar_objective(i, xi, c);
            if val < best.0 {
                best = (val, c);
            }
        }
        *o = best.1;
    }
}

/// `prox_{sF*}(y)` for `F(v) = ½‖v − b‖²`.
pub fn prox_conj_quadratic_fit(s: f64, b: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(b).map(|(yi, bi)| (yi - s * bi) / (1.0 + s)).collect()
}

/// `prox_{sF*}(y)` for `F(v) = (a/2)‖v − c‖²`.
pub fn prox_conj_weighted_quadratic(s: f64, a: f64, c: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(c).map(|(yi, ci)| (yi - s * ci) / (1.0 + s / a)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallMode {
    /// Pairs `(i, i + n/2)` projected onto the Euclidean disc of radius α.
    Group,
    /// Each entry clipped to `[−α, α]`.
    Plain,
}

/// Projection onto the dual ball of `α‖·‖_{2,1}` or `α‖·‖_1`, which is the
/// conjugate prox of those norms for any step.
pub fn dual_ball_projection(mode: BallMode, alpha: f64, y: &mut [f64]) {
    match mode {
        BallMode::Plain => y.iter_mut().for_each(|v| *v = v.max(-alpha).min(alpha)),
        BallMode::Group => {
            let ne = y.len() / 2;
            for i in 0..ne {
                let norm = y[i].hypot(y[i + ne]);
                if norm > alpha {
                    let scale = if norm > 0.0 { alpha / norm } else { 0.0 };
                    y[i] *= scale;
                    y[i + ne] *= scale;
                }
            }
        }
    }
}
