//! Two-block primal-dual proximal splitting for
//! `min_x G(x) + F1(K1 x) + F2(K2 x)`, with separate dual steps per block,
//! and its variant for nonlinear `K`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use crate::linalg::norm2;
use crate::operator::{Linear, LinearOperator, NonlinearOperator};
use crate::prox::{dual_ball_projection, BallMode, ProxGParams};
use crate::regularizers::group_norm;
use crate::{Error, Result};

/// Safety factor applied to power-method norm estimates.
pub const NORM_SAFETY: f64 = 1.01;

/// Power-method estimate of `‖op‖` without the safety factor.
pub fn operator_norm_estimate<K: LinearOperator>(op: &K, iters: usize, seed: u64) -> f64 {
    let n = op.input_dim();
    if n == 0 || op.output_dim() == 0 {
        return 0.0;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let kx = op.apply(&x);
        est = norm2(&kx);
        if est == 0.0 {
            return 0.0;
        }
        x = op.apply_adjoint(&kx);
    }
    est
}

/// Upper bound `L ≥ ‖op‖`: the power-method estimate times [`NORM_SAFETY`].
pub fn operator_norm<K: LinearOperator>(op: &K, iters: usize, seed: u64) -> f64 {
    NORM_SAFETY * operator_norm_estimate(op, iters, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpsStepParams {
    pub t: f64,
    pub s1: f64,
    pub s2: f64,
    pub delta: f64,
    pub lambda: f64,
    pub l1: f64,
    pub l2: f64,
}

impl PdpsStepParams {
    /// `(1+λ)t s1 L1² < 1` and `(1+1/λ)t s2 L2² < 1`.
    pub fn satisfies_condition(&self) -> bool {
        (1.0 + self.lambda) * self.t * self.s1 * self.l1 * self.l1 < 1.0
            && (1.0 + 1.0 / self.lambda) * self.t * self.s2 * self.l2 * self.l2 < 1.0
    }
}

/// Balanced dual steps `s_j = (1−δ)/((1+λ_j) t L_j²)` with `λ_1 = λ`,
/// `λ_2 = 1/λ`. For `λ = 1` this is `s_j = (1−δ)/(2tL_j²)`.
pub fn step_lengths(t: f64, l1: f64, l2: f64, delta: f64, lambda: f64) -> Result<PdpsStepParams> {
    if !(t > 0.0) || !(l1 > 0.0) || !(l2 > 0.0) || !(lambda > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "step lengths need t, L1, L2, λ > 0 and δ ∈ (0,1); got t={t}, L1={l1}, L2={l2}, δ={delta}, λ={lambda}"
        )));
    }
    let s1 = (1.0 - delta) / ((1.0 + lambda) * t * l1 * l1);
    let s2 = (1.0 - delta) / ((1.0 + 1.0 / lambda) * t * l2 * l2);
    let p = PdpsStepParams { t, s1, s2, delta, lambda, l1, l2 };
    debug_assert!(p.satisfies_condition());
    Ok(p)
}

/// A convex `F_j` accessed through `prox_{sF_j*}`.
#[derive(Debug, Clone, PartialEq)]
pub enum DualProx {
    /// `F(v) = (weight/2)‖v − offset‖²`.
    QuadraticFit { weight: f64, offset: Vec<f64> },
    /// `F = α‖·‖_{2,1}` (group) or `α‖·‖_1` (plain).
    Ball { mode: BallMode, alpha: f64 },
    /// `F ≡ 0`.
    Zero,
}

impl DualProx {
    /// In-place `y ← prox_{sF*}(y)`.
    pub fn apply(&self, s: f64, y: &mut [f64]) {
        match self {
            DualProx::QuadraticFit { weight, offset } => {
                let d = 1.0 + s / weight;
                for (v, c) in y.iter_mut().zip(offset) {
                    *v = (*v - s * c) / d;
                }
            }
            DualProx::Ball { mode, alpha } => dual_ball_projection(*mode, *alpha, y),
            DualProx::Zero => y.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// `F(v)`.
    pub fn value(&self, v: &[f64]) -> f64 {
        match self {
            DualProx::QuadraticFit { weight, offset } => {
                0.5 * weight * v.iter().zip(offset).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            DualProx::Ball { mode: BallMode::Group, alpha } => alpha * group_norm(v),
            DualProx::Ball { mode: BallMode::Plain, alpha } => alpha * v.iter().map(|x| x.abs()).sum::<f64>(),
            DualProx::Zero => 0.0,
        }
    }
}

/// `G(x) + F1(K1 x) + F2(K2 x)`. `G` is given by its prox parameters; its
/// step `g.t` must equal the primal step used by the solver.
#[derive(Debug, Clone)]
pub struct TwoBlockProblem<K1, K2> {
    pub g: ProxGParams,
    pub k1: K1,
    pub f1: DualProx,
    pub k2: K2,
    pub f2: DualProx,
}

impl<K1: LinearOperator, K2: LinearOperator> TwoBlockProblem<K1, K2> {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.g.g_value(x) + self.f1.value(&self.k1.apply(x)) + self.f2.value(&self.k2.apply(x))
    }
}

impl<K1: NonlinearOperator, K2: NonlinearOperator> TwoBlockProblem<K1, K2> {
    pub fn objective_nonlinear(&self, x: &[f64]) -> Result<f64> {
        Ok(self.g.g_value(x) + self.f1.value(&self.k1.value(x)?) + self.f2.value(&self.k2.value(x)?))
    }
}

/// How `K(x̄)` is evaluated in the dual steps of the nonlinear variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualEvaluation {
    /// `K(x̄)`.
    #[default]
    Exact,
    /// `K(x^{i+1}) + ∇K(x^{i+1})*(x̄ − x^{i+1})`; needed when `x̄` may leave
    /// the domain of `K`.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PdpsOptions {
    /// Record the primal objective every this many iterations (0 = never).
    pub record_every: usize,
    /// Recompute Jacobians every this many iterations.
    pub refresh_every: usize,
    pub dual_evaluation: DualEvaluation,
    /// Re-estimate `‖∇K_1(x^i)‖` every this many iterations (0 = never).
    pub norm_check_every: usize,
}

impl Default for PdpsOptions {
    fn default() -> Self {
        Self { record_every: 0, refresh_every: 1, dual_evaluation: DualEvaluation::Exact, norm_check_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpsOutput {
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// `(iteration, primal objective)` pairs.
    pub trace: Vec<(usize, f64)>,
    /// `e = (x^i − x^{i+1})/t − K1*(y1^i − y1^{i+1}) − K2*(y2^i − y2^{i+1})`
    /// of the last iteration.
    pub residual: Vec<f64>,
    pub iterations: usize,
    /// Set when a Jacobian norm estimate exceeded `L1` by more than 10%.
    pub norm_exceeded: bool,
}

/// Iteration state shared by the linear and nonlinear solvers.
pub struct PdpsSolver<'a, N1: NonlinearOperator, N2: NonlinearOperator> {
    g: &'a ProxGParams,
    k1: N1,
    f1: &'a DualProx,
    k2: N2,
    f2: &'a DualProx,
    params: PdpsStepParams,
    options: PdpsOptions,
    x: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    jac1: Option<N1::Jacobian>,
    jac2: Option<N2::Jacobian>,
    iteration: usize,
    trace: Vec<(usize, f64)>,
    residual: Vec<f64>,
    norm_exceeded: bool,
    buf_v: Vec<f64>,
    buf_a1: Vec<f64>,
    buf_a2: Vec<f64>,
    buf_w1: Vec<f64>,
    buf_w2: Vec<f64>,
    buf_xbar: Vec<f64>,
}

impl<'a, N1: NonlinearOperator, N2: NonlinearOperator> PdpsSolver<'a, N1, N2> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g: &'a ProxGParams,
        k1: N1,
        f1: &'a DualProx,
        k2: N2,
        f2: &'a DualProx,
        params: PdpsStepParams,
        options: PdpsOptions,
        x0: Vec<f64>,
        y10: Vec<f64>,
        y20: Vec<f64>,
    ) -> Result<Self> {
        let n = k1.input_dim();
        if k2.input_dim() != n || x0.len() != n || y10.len() != k1.output_dim() || y20.len() != k2.output_dim() {
            return Err(Error::Domain(format!(
                "dimension mismatch: x0={}, K1 {}→{}, K2 {}→{}, y1={}, y2={}",
                x0.len(),
                n,
                k1.output_dim(),
                k2.input_dim(),
                k2.output_dim(),
                y10.len(),
                y20.len()
            )));
        }
        if g.t != params.t {
            return Err(Error::Config(format!("prox step {} differs from primal step {}", g.t, params.t)));
        }
        if !params.satisfies_condition() {
            return Err(Error::Config("step lengths violate the primal-dual step condition".into()));
        }
        let (m1, m2) = (k1.output_dim(), k2.output_dim());
        Ok(Self {
            g,
            k1,
            f1,
            k2,
            f2,
            params,
            options,
            x: x0,
            y1: y10,
            y2: y20,
            jac1: None,
            jac2: None,
            iteration: 0,
            trace: Vec::new(),
            residual: vec![0.0; n],
            norm_exceeded: false,
            buf_v: vec![0.0; n],
            buf_a1: vec![0.0; n],
            buf_a2: vec![0.0; n],
            buf_w1: vec![0.0; m1],
            buf_w2: vec![0.0; m2],
            buf_xbar: vec![0.0; n],
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn objective(&self) -> Result<f64> {
        Ok(self.g.g_value(&self.x) + self.f1.value(&self.k1.value(&self.x)?) + self.f2.value(&self.k2.value(&self.x)?))
    }

    /// Recomputes the Jacobians at the current `x`; with `values`, also
    /// stores `K_j(x)` in the dual buffers.
    fn refresh(&mut self, at_iteration: usize, values: bool) -> Result<()> {
        if values {
            let (v1, j1) = self.k1.linearize(&self.x)?;
            let (v2, j2) = self.k2.linearize(&self.x)?;
            self.buf_w1.copy_from_slice(&v1);
            self.buf_w2.copy_from_slice(&v2);
            self.jac1 = Some(j1);
            self.jac2 = Some(j2);
        } else {
            self.jac1 = Some(self.k1.jacobian(&self.x)?);
            self.jac2 = Some(self.k2.jacobian(&self.x)?);
        }
        let every = self.options.norm_check_every;
        if every > 0 && at_iteration % every == 0 {
            let est = operator_norm_estimate(self.jac1.as_ref().unwrap(), 20, at_iteration as u64);
            if est > 1.1 * self.params.l1 {
                self.norm_exceeded = true;
            }
        }
        Ok(())
    }

    /// Runs `iters` further iterations. The residual refers to the last one.
    pub fn run(&mut self, iters: usize) -> Result<()> {
        let t = self.params.t;
        let n = self.x.len();
        let mut dy1 = vec![0.0; self.y1.len()];
        let mut dy2 = vec![0.0; self.y2.len()];
        for step in 0..iters {
            let refresh_due = self.jac1.is_none()
                || (self.options.dual_evaluation == DualEvaluation::Exact
                    && self.iteration % self.options.refresh_every.max(1) == 0);
            if refresh_due {
                self.refresh(self.iteration, false)?;
            }
            let j1 = self.jac1.as_ref().unwrap();
            let j2 = self.jac2.as_ref().unwrap();
            j1.apply_adjoint_into(&self.y1, &mut self.buf_a1);
            j2.apply_adjoint_into(&self.y2, &mut self.buf_a2);
            for i in 0..n {
                self.buf_v[i] = self.x[i] - t * self.buf_a1[i] - t * self.buf_a2[i];
            }
            // buf_xbar temporarily holds x^{i+1}.
            self.g.apply_into(&self.buf_v, &mut self.buf_xbar);
            let last = step + 1 == iters;
            if last {
                for i in 0..n {
                    self.residual[i] = (self.x[i] - self.buf_xbar[i]) / t;
                }
                dy1.copy_from_slice(&self.y1);
                dy2.copy_from_slice(&self.y2);
            }
            for i in 0..n {
                let next = self.buf_xbar[i];
                self.buf_xbar[i] = 2.0 * next - self.x[i];
                self.x[i] = next;
            }
            match self.options.dual_evaluation {
                DualEvaluation::Exact => {
                    self.k1.value_into(&self.buf_xbar, &mut self.buf_w1)?;
                    self.k2.value_into(&self.buf_xbar, &mut self.buf_w2)?;
                }
                DualEvaluation::Linearized => {
                    // x now holds x^{i+1}; linearise there and keep the
                    // Jacobians for the next primal step.
                    if (self.iteration + 1) % self.options.refresh_every.max(1) == 0 {
                        self.refresh(self.iteration + 1, true)?;
                    } else {
                        self.k1.value_into(&self.x, &mut self.buf_w1)?;
                        self.k2.value_into(&self.x, &mut self.buf_w2)?;
                    }
                    let diff: Vec<f64> = self.buf_xbar.iter().zip(&self.x).map(|(a, b)| a - b).collect();
                    let l1 = self.jac1.as_ref().unwrap().apply(&diff);
                    let l2 = self.jac2.as_ref().unwrap().apply(&diff);
                    for (w, d) in self.buf_w1.iter_mut().zip(&l1) {
                        *w += d;
                    }
                    for (w, d) in self.buf_w2.iter_mut().zip(&l2) {
                        *w += d;
                    }
                }
            }
            let (s1, s2) = (self.params.s1, self.params.s2);
            for (y, w) in self.y1.iter_mut().zip(&self.buf_w1) {
                *y += s1 * w;
            }
            for (y, w) in self.y2.iter_mut().zip(&self.buf_w2) {
                *y += s2 * w;
            }
            self.f1.apply(s1, &mut self.y1);
            self.f2.apply(s2, &mut self.y2);
            self.iteration += 1;

            if self.x.iter().chain(&self.y1).chain(&self.y2).any(|v| !v.is_finite()) {
                return Err(Error::Divergence { iteration: self.iteration });
            }
            if last {
                for (d, y) in dy1.iter_mut().zip(&self.y1) {
                    *d -= y;
                }
                for (d, y) in dy2.iter_mut().zip(&self.y2) {
                    *d -= y;
                }
                let j1 = self.jac1.as_ref().unwrap();
                let j2 = self.jac2.as_ref().unwrap();
                let r1 = j1.apply_adjoint(&dy1);
                let r2 = j2.apply_adjoint(&dy2);
                for i in 0..n {
                    self.residual[i] -= r1[i] + r2[i];
                }
            }
            let every = self.options.record_every;
            if every > 0 && self.iteration % every == 0 {
                let obj = self.objective()?;
                self.trace.push((self.iteration, obj));
            }
        }
        Ok(())
    }

    pub fn into_output(self) -> PdpsOutput {
        PdpsOutput {
            x: self.x,
            y1: self.y1,
            y2: self.y2,
            trace: self.trace,
            residual: self.residual,
            iterations: self.iteration,
            norm_exceeded: self.norm_exceeded,
        }
    }
}

/// Runs `iters` iterations of the two-block method on linear operators.
pub fn pdps_solve<K1: LinearOperator, K2: LinearOperator>(
    problem: &TwoBlockProblem<K1, K2>,
    params: &PdpsStepParams,
    x0: Vec<f64>,
    y10: Vec<f64>,
    y20: Vec<f64>,
    iters: usize,
    options: PdpsOptions,
) -> Result<PdpsOutput> {
    let options = PdpsOptions { dual_evaluation: DualEvaluation::Exact, ..options };
    let mut solver = PdpsSolver::new(
        &problem.g,
        Linear(&problem.k1),
        &problem.f1,
        Linear(&problem.k2),
        &problem.f2,
        *params,
        options,
        x0,
        y10,
        y20,
    )?;
    solver.run(iters)?;
    Ok(solver.into_output())
}

/// Nonlinear variant: `K(x̄)` in the dual steps and `∇K(x^i)` adjoints in the
/// primal step. Duals start at zero.
pub fn nlpdps_solve<K1: NonlinearOperator, K2: NonlinearOperator>(
    problem: &TwoBlockProblem<K1, K2>,
    params: &PdpsStepParams,
    x0: Vec<f64>,
    iters: usize,
    options: PdpsOptions,
) -> Result<PdpsOutput> {
    let (m1, m2) = (problem.k1.output_dim(), problem.k2.output_dim());
    let mut solver = PdpsSolver::new(
        &problem.g,
        &problem.k1,
        &problem.f1,
        &problem.k2,
        &problem.f2,
        *params,
        options,
        x0,
        vec![0.0; m1],
        vec![0.0; m2],
    )?;
    solver.run(iters)?;
    Ok(solver.into_output())
}

impl<T: NonlinearOperator + ?Sized> NonlinearOperator for &T {
    type Jacobian = T::Jacobian;

    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn value_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).value_into(x, out)
    }
    fn jacobian(&self, x: &[f64]) -> Result<T::Jacobian> {
        (**self).jacobian(x)
    }
    fn linearize(&self, x: &[f64]) -> Result<(Vec<f64>, T::Jacobian)> {
        (**self).linearize(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DenseOperator, IdentityOperator, ZeroOperator};
    use crate::regularizers::{build_tv_operator, BoxSet, SmoothedTvMap};
    use nalgebra::DMatrix;

    fn quadratic_g(t: f64, c: Vec<f64>) -> ProxGParams {
        ProxGParams::new(t, 1.0, c, BoxSet::unbounded(), None).unwrap()
    }

    #[test]
    fn norm_of_identity_and_diagonal() {
        let id = IdentityOperator(5);
        assert!((operator_norm(&id, 10, 1) - 1.01).abs() < 1e-12);
        let d = DenseOperator(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0])));
        assert!((operator_norm_estimate(&d, 200, 1) - 3.0).abs() < 1e-6);
        let z = ZeroOperator { input_dim: 3, output_dim: 2 };
        assert_eq!(operator_norm(&z, 10, 1), 0.0);
    }

    #[test]
    fn norm_of_random_matrix_matches_svd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let m = DMatrix::from_fn(20, 30, |_, _| rng.random::<f64>() - 0.5);
        let svd_max = m.clone().singular_values().max();
        let est = operator_norm_estimate(&DenseOperator(m), 2000, 3);
        assert!((est - svd_max).abs() < 1e-6 * svd_max, "{est} vs {svd_max}");
    }

    #[test]
    fn step_length_example() {
        let p = step_lengths(1e-6, 100.0, 100.0, 0.01, 1.0).unwrap();
        assert!((p.s1 - 49.5).abs() < 1e-9);
        assert!(((1.0 + 1.0) * p.t * p.s1 * p.l1 * p.l1 - 0.99).abs() < 1e-12);
        assert!(p.satisfies_condition());
        assert!(step_lengths(0.0, 1.0, 1.0, 0.01, 1.0).is_err());
        assert!(step_lengths(1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn converges_to_closed_form() {
        let c = vec![1.0, -2.0, 0.5];
        let t = 0.5;
        let k1 = IdentityOperator(3);
        let k2 = ZeroOperator { input_dim: 3, output_dim: 1 };
        let problem = TwoBlockProblem {
            g: quadratic_g(t, c.clone()),
            k1,
            f1: DualProx::QuadraticFit { weight: 1.0, offset: vec![0.0; 3] },
            k2,
            f2: DualProx::Zero,
        };
        let params = step_lengths(t, 1.0, 1.0, 0.01, 1.0).unwrap();
        let out = pdps_solve(&problem, &params, vec![0.0; 3], vec![0.0; 3], vec![0.0], 5000, PdpsOptions::default())
            .unwrap();
        for i in 0..3 {
            assert!((out.x[i] - c[i] / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn saddle_point_is_stationary() {
        // min ½(x−c)² + ½x²: x* = c/2, y* = K x* = c/2.
        let c = vec![2.0, 4.0];
        let problem = TwoBlockProblem {
            g: quadratic_g(0.3, c.clone()),
            k1: IdentityOperator(2),
            f1: DualProx::QuadraticFit { weight: 1.0, offset: vec![0.0; 2] },
            k2: ZeroOperator { input_dim: 2, output_dim: 2 },
            f2: DualProx::Zero,
        };
        let params = step_lengths(0.3, 1.0, 1.0, 0.01, 1.0).unwrap();
        let out = pdps_solve(&problem, &params, vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0; 2], 50, PdpsOptions::default())
            .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-12 && (out.x[1] - 2.0).abs() < 1e-12);
        assert!(out.residual.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn zero_second_block_matches_single_block() {
        let c = vec![1.0, 3.0];
        let m = DenseOperator(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 2.0]));
        let mk = |k2_out: usize| TwoBlockProblem {
            g: quadratic_g(0.1, c.clone()),
            k1: m.clone(),
            f1: DualProx::QuadraticFit { weight: 1.0, offset: vec![0.5, 0.5] },
            k2: ZeroOperator { input_dim: 2, output_dim: k2_out },
            f2: DualProx::Zero,
        };
        let params = step_lengths(0.1, operator_norm(&m, 100, 0), 1.0, 0.01, 1.0).unwrap();
        let a = pdps_solve(&mk(1), &params, vec![0.0; 2], vec![0.0; 2], vec![0.0], 300, PdpsOptions::default()).unwrap();
        let b = pdps_solve(&mk(4), &params, vec![0.0; 2], vec![0.0; 2], vec![0.0; 4], 300, PdpsOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y1, b.y1);
    }

    #[test]
    fn nonlinear_interface_reproduces_linear_iterates() {
        let m = DenseOperator(DMatrix::from_fn(4, 3, |i, j| ((i + 2 * j) as f64).sin()));
        let tv = DenseOperator(DMatrix::from_fn(2, 3, |i, j| if i == j { 1.0 } else { -0.5 }));
        let g = ProxGParams::new(0.2, 1e-3, vec![0.1; 3], BoxSet::new(-1.0, 1.0).unwrap(), None).unwrap();
        let f1 = DualProx::QuadraticFit { weight: 1.0, offset: vec![0.3, -0.1, 0.2, 0.5] };
        let f2 = DualProx::Ball { mode: BallMode::Plain, alpha: 0.05 };
        let linear = TwoBlockProblem { g: g.clone(), k1: m.clone(), f1: f1.clone(), k2: tv.clone(), f2: f2.clone() };
        let params = step_lengths(0.2, operator_norm(&m, 100, 0), operator_norm(&tv, 100, 0), 0.01, 1.0).unwrap();
        let opts = PdpsOptions { record_every: 10, ..PdpsOptions::default() };
        let a = pdps_solve(&linear, &params, vec![0.0; 3], vec![0.0; 4], vec![0.0; 2], 200, opts).unwrap();
        let nl = TwoBlockProblem { g, k1: Linear(&m), f1, k2: Linear(&tv), f2 };
        let b = nlpdps_solve(&nl, &params, vec![0.0; 3], 200, opts).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y1, b.y1);
        assert_eq!(a.y2, b.y2);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn chunked_runs_match_single_run() {
        let m = DenseOperator(DMatrix::from_fn(3, 3, |i, j| 1.0 / (1 + i + j) as f64));
        let problem = TwoBlockProblem {
            g: quadratic_g(0.5, vec![1.0, 0.0, -1.0]),
            k1: m.clone(),
            f1: DualProx::QuadraticFit { weight: 1.0, offset: vec![1.0; 3] },
            k2: IdentityOperator(3),
            f2: DualProx::Ball { mode: BallMode::Plain, alpha: 0.1 },
        };
        let params = step_lengths(0.5, operator_norm(&m, 100, 0), 1.01, 0.01, 1.0).unwrap();
        let whole = pdps_solve(&problem, &params, vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], 100, PdpsOptions::default())
            .unwrap();
        let mut solver = PdpsSolver::new(
            &problem.g,
            Linear(&problem.k1),
            &problem.f1,
            Linear(&problem.k2),
            &problem.f2,
            params,
            PdpsOptions::default(),
            vec![0.0; 3],
            vec![0.0; 3],
            vec![0.0; 3],
        )
        .unwrap();
        solver.run(40).unwrap();
        solver.run(60).unwrap();
        let out = solver.into_output();
        assert_eq!(out.x, whole.x);
        assert_eq!(out.residual, whole.residual);
    }

    #[test]
    fn best_objective_is_monotone() {
        let m = DenseOperator(DMatrix::from_fn(6, 4, |i, j| ((i * 3 + j) as f64 * 0.7).cos()));
        let problem = TwoBlockProblem {
            g: ProxGParams::new(0.1, 0.0, vec![0.0; 4], BoxSet::new(0.0, 5.0).unwrap(), None).unwrap(),
            k1: m.clone(),
            f1: DualProx::QuadraticFit { weight: 1.0, offset: vec![1.0; 6] },
            k2: IdentityOperator(4),
            f2: DualProx::Ball { mode: BallMode::Plain, alpha: 0.2 },
        };
        let params = step_lengths(0.1, operator_norm(&m, 100, 0), 1.01, 0.01, 1.0).unwrap();
        let opts = PdpsOptions { record_every: 1, ..PdpsOptions::default() };
        let out = pdps_solve(&problem, &params, vec![1.0; 4], vec![0.0; 6], vec![0.0; 4], 500, opts).unwrap();
        let mut best = f64::INFINITY;
        for &(_, v) in &out.trace {
            let next = best.min(v);
            assert!(next <= best);
            best = next;
        }
        assert!(out.trace.last().unwrap().1 <= out.trace[0].1);
    }

    #[test]
    fn smoothed_tv_denoising_matches_grid_search() {
        // Single triangle: 3 unknowns, 1 element.
        let mesh =
            crate::geometry::Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![], 1.0).unwrap();
        let geo = crate::geometry::element_geometry(&mesh).unwrap();
        let op = build_tv_operator(&mesh, &geo);
        let data = vec![0.2, 1.0, 0.6];
        let (alpha, gamma) = (0.3, 1e-2);
        let map = SmoothedTvMap { op: &op, gamma };
        let t = 0.2;
        let problem = TwoBlockProblem {
            g: ProxGParams::new(t, 0.0, vec![0.0; 3], BoxSet::unbounded(), None).unwrap(),
            k1: Linear(&crate::operator::IdentityOperator(3)),
            f1: DualProx::QuadraticFit { weight: 1.0, offset: data.clone() },
            k2: map,
            f2: DualProx::Ball { mode: BallMode::Plain, alpha },
        };
        let l2 = operator_norm(&op, 100, 0);
        let params = step_lengths(t, 1.01, l2, 0.01, 1.0).unwrap();
        let out = nlpdps_solve(&problem, &params, data.clone(), 20000, PdpsOptions::default()).unwrap();
        let obj = |x: &[f64]| {
            0.5 * x.iter().zip(&data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                + alpha * crate::regularizers::smoothed_tv(&op, x, gamma).unwrap().value
        };
        let mut best = f64::INFINITY;
        let n = 60;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let x = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                    best = best.min(obj(&x));
                }
            }
        }
        let found = obj(&out.x);
        assert!(found <= best + 1e-4, "{found} vs grid {best}");
        assert!(found >= best - 1e-3);
    }
}
