//! Relaxed inexact proximal Gauss–Newton outer iteration and baselines.

mod baselines;
mod relaxation;
mod stopping;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::linalg::{dist2, norm2, CsrMatrix};
use crate::operator::{DenseOperator, DenseRef, Linear, LinearOperator, NonlinearOperator, ZeroOperator};
use crate::pdps::{operator_norm, step_lengths, DualEvaluation, DualProx, PdpsOptions, PdpsSolver, PdpsStepParams};
use crate::prox::{BallMode, ProxGParams};
use crate::regularizers::{Penalty, Regularization, SmoothedTvMap, TvOperator};
use crate::{Error, Result};

pub use crate::operator::ResidualModel;

pub use baselines::{newton_baseline, nlpdps_baseline, BaselineResult, NewtonConfig, NlPdpsConfig};
pub use relaxation::{
    estimate_w_bound, fractional_error, relaxation_linesearch, CandidateEval, ConvergenceBoundInputs, Linesearch,
    LinesearchOutcome, LinesearchState,
};
pub use stopping::{first_acceptance, residual_stop, stagnation_stop, Decision, StagnationMonitor, StagnationRule};

/// How each subproblem solve is terminated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerStop {
    /// Exactly `inner_iters` iterations.
    Fixed,
    /// Blocks of `chunk` iterations until `‖e‖ ≤ ρ‖x̃ − z‖` or `cap` iterations.
    Residual { rho: f64, chunk: usize, cap: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RipgnConfig {
    pub w: f64,
    pub beta: f64,
    pub t: f64,
    pub delta: f64,
    /// Balancing parameter of the dual steps.
    pub lambda: f64,
    pub inner_iters: usize,
    pub max_outer: usize,
    pub stagnation: StagnationRule,
    pub inner_stop: InnerStop,
    pub linesearch: Linesearch,
    /// Report divergence once `J > divergence_factor · J(z^0)`.
    pub divergence_factor: f64,
    pub norm_iters: usize,
    pub seed: u64,
}

impl Default for RipgnConfig {
    fn default() -> Self {
        Self {
            w: 0.75,
            beta: 1e-10,
            t: 1e-6,
            delta: 0.01,
            lambda: 1.0,
            inner_iters: 6000,
            max_outer: 100,
            stagnation: StagnationRule::default(),
            inner_stop: InnerStop::Fixed,
            linesearch: Linesearch::Off,
            divergence_factor: 10.0,
            norm_iters: 50,
            seed: 0,
        }
    }
}

impl RipgnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(Error::Config(format!("w = {} outside (0, 1]", self.w)));
        }
        if !(self.beta >= 0.0) || !(self.t > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::Config(format!("need β ≥ 0, t > 0, λ > 0; got β={}, t={}, λ={}", self.beta, self.t, self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("δ = {} outside (0, 1)", self.delta)));
        }
        if self.inner_iters == 0 {
            return Err(Error::Config("inner_iters must be at least 1".into()));
        }
        if let InnerStop::Residual { rho, chunk, cap } = self.inner_stop {
            if !(rho >= 0.0) || chunk == 0 || cap < chunk {
                return Err(Error::Config(format!("invalid residual stop ρ={rho}, chunk={chunk}, cap={cap}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub k: usize,
    /// `J(z^k)` after the update.
    pub objective: f64,
    /// `‖x̃^k − z^k‖` with `z^k` the iterate before the update.
    pub step_norm: f64,
    /// `J̃_k(x̃^k)`.
    pub subproblem_objective: f64,
    /// Linearised objective `J_k(z^{k+1})` without the proximal term.
    pub model_objective: f64,
    /// Milliseconds since the solve started.
    pub wall_ms: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub initial_objective: f64,
    /// Accepted outer iterations.
    pub entries: Vec<TraceEntry>,
    /// Lookahead iterations dropped by a confirmed stagnation stop.
    pub discarded: Vec<TraceEntry>,
}

impl ConvergenceTrace {
    /// `J(z^0), J(z^1), …` over accepted iterations.
    pub fn objectives(&self) -> Vec<f64> {
        core::iter::once(self.initial_objective).chain(self.entries.iter().map(|e| e.objective)).collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.entries.last().map_or(self.initial_objective, |e| e.objective)
    }

    /// One line per iterate, `k J dx_norm subproblem_J wall_ms w_k`, starting
    /// with `k = 0`. With `timing` off, wall times print as 0.
    pub fn to_text(&self, timing: bool) -> String {
        let mut out = String::new();
        let j0 = self.initial_objective;
        let _ = writeln!(out, "0 {j0} 0 {j0} 0 0");
        for e in &self.entries {
            let ms = if timing { e.wall_ms } else { 0.0 };
            let _ = writeln!(out, "{} {} {} {} {} {}", e.k, e.objective, e.step_norm, e.subproblem_objective, ms, e.w);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Stagnation,
    MaxIterations,
    /// `x̃^k = z^k`.
    FixedPoint,
    Diverged,
    /// Sufficient decrease failed after the retry.
    SafeguardFailure,
    /// Backtracking found no decrease (Newton baseline).
    NoDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RipgnResult {
    pub z: Vec<f64>,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
    /// Sufficient decrease failed or the residual stop hit its cap.
    pub warning: bool,
    pub diverged: bool,
}

/// Millisecond time source; the core crate has no clock of its own.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Called with `(k, subproblem, step parameters)` before each inner solve.
pub type Observer<'h> = dyn FnMut(usize, &Subproblem<'_>, &PdpsStepParams) + 'h;

#[derive(Default)]
pub struct RipgnHooks<'h> {
    pub clock: Option<&'h dyn Clock>,
    pub observer: Option<&'h mut Observer<'h>>,
}

pub(crate) fn elapsed(clock: Option<&dyn Clock>, start: f64) -> f64 {
    clock.map_or(0.0, |c| c.now_ms() - start)
}

/// `J(z) = ½‖A(z)‖² + F(z)`.
pub struct RipgnProblem<'a, M: ResidualModel> {
    pub model: &'a M,
    pub regularization: &'a Regularization,
}

impl<M: ResidualModel> RipgnProblem<'_, M> {
    /// `J(z)`, `+∞` outside `V`.
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        if !self.regularization.bounds.contains(z) {
            return Ok(f64::INFINITY);
        }
        let a = self.model.residual(z)?;
        Ok(0.5 * dot_self(&a) + self.regularization.value(z)?)
    }
}

fn dot_self(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// The second operator block of a subproblem.
#[derive(Debug, Clone, Copy)]
pub enum PenaltyOperator<'a> {
    Zero(ZeroOperator),
    Dense(DenseRef<'a>),
    Tv(&'a TvOperator),
    SmoothedTv(SmoothedTvMap<'a>),
}

#[derive(Debug, Clone)]
pub enum PenaltyJacobian<'a> {
    Zero(ZeroOperator),
    Dense(DenseRef<'a>),
    Tv(&'a TvOperator),
    Owned(CsrMatrix),
}

impl LinearOperator for PenaltyJacobian<'_> {
    fn input_dim(&self) -> usize {
        match self {
            Self::Zero(o) => o.input_dim(),
            Self::Dense(o) => o.input_dim(),
            Self::Tv(o) => o.input_dim(),
            Self::Owned(o) => o.input_dim(),
        }
    }
    fn output_dim(&self) -> usize {
        match self {
            Self::Zero(o) => o.output_dim(),
            Self::Dense(o) => o.output_dim(),
            Self::Tv(o) => o.output_dim(),
            Self::Owned(o) => o.output_dim(),
        }
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero(o) => o.apply_into(x, out),
            Self::Dense(o) => o.apply_into(x, out),
            Self::Tv(o) => o.apply_into(x, out),
            Self::Owned(o) => o.apply_into(x, out),
        }
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero(o) => o.apply_adjoint_into(y, out),
            Self::Dense(o) => o.apply_adjoint_into(y, out),
            Self::Tv(o) => o.apply_adjoint_into(y, out),
            Self::Owned(o) => o.apply_adjoint_into(y, out),
        }
    }
}

impl<'a> NonlinearOperator for PenaltyOperator<'a> {
    type Jacobian = PenaltyJacobian<'a>;

    fn input_dim(&self) -> usize {
        match self {
            Self::Zero(o) => o.input_dim(),
            Self::Dense(o) => o.input_dim(),
            Self::Tv(o) => o.input_dim(),
            Self::SmoothedTv(o) => o.input_dim(),
        }
    }
    fn output_dim(&self) -> usize {
        match self {
            Self::Zero(o) => o.output_dim(),
            Self::Dense(o) => o.output_dim(),
            Self::Tv(o) => o.output_dim(),
            Self::SmoothedTv(o) => o.output_dim(),
        }
    }
    fn value_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Self::Zero(o) => o.apply_into(x, out),
            Self::Dense(o) => o.apply_into(x, out),
            Self::Tv(o) => o.apply_into(x, out),
            Self::SmoothedTv(o) => return o.value_into(x, out),
        }
        Ok(())
    }
    fn jacobian(&self, x: &[f64]) -> Result<PenaltyJacobian<'a>> {
        Ok(match *self {
            Self::Zero(o) => PenaltyJacobian::Zero(o),
            Self::Dense(o) => PenaltyJacobian::Dense(o),
            Self::Tv(o) => PenaltyJacobian::Tv(o),
            Self::SmoothedTv(o) => PenaltyJacobian::Owned(o.jacobian(x)?),
        })
    }
}

/// `K2` and `F2` for the penalty of `reg` on `n` unknowns.
pub fn penalty_blocks(reg: &Regularization, n: usize) -> (PenaltyOperator<'_>, DualProx) {
    match &reg.penalty {
        Penalty::None => (PenaltyOperator::Zero(ZeroOperator { input_dim: n, output_dim: 0 }), DualProx::Zero),
        Penalty::Smoothness(p) => (
            PenaltyOperator::Dense(DenseRef(&p.r_gamma)),
            DualProx::QuadraticFit { weight: 2.0, offset: p.mapped_mean() },
        ),
        Penalty::Tv { op, alpha } => (PenaltyOperator::Tv(op), DualProx::Ball { mode: BallMode::Group, alpha: *alpha }),
        Penalty::SmoothedTv { op, alpha, gamma } => (
            PenaltyOperator::SmoothedTv(SmoothedTvMap { op, gamma: *gamma }),
            DualProx::Ball { mode: BallMode::Plain, alpha: *alpha },
        ),
    }
}

/// Norm bound `L2` of the penalty operator; 1 when there is none.
pub fn penalty_norm(reg: &Regularization, iters: usize, seed: u64) -> f64 {
    match &reg.penalty {
        Penalty::None => 1.0,
        Penalty::Smoothness(p) => operator_norm(&DenseRef(&p.r_gamma), iters, seed),
        Penalty::Tv { op, .. } | Penalty::SmoothedTv { op, .. } => operator_norm(op, iters, seed),
    }
}

/// The convex model `J̃_k` at anchor `z^k`.
pub struct Subproblem<'a> {
    pub g: ProxGParams,
    /// `∇A(z^k)*`.
    pub k1: DenseOperator,
    /// `½‖· − b^k‖²` with `b^k = ∇A(z^k)* z^k − A(z^k)`.
    pub f1: DualProx,
    pub k2: PenaltyOperator<'a>,
    pub f2: DualProx,
    /// `A(z^k)`.
    pub residual: Vec<f64>,
}

impl Subproblem<'_> {
    pub fn anchor(&self) -> &[f64] {
        &self.g.anchor
    }

    /// `A(z^k) + ∇A(z^k)*(x − z^k)`.
    pub fn linearized_residual(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(self.anchor()).map(|(a, b)| a - b).collect();
        let mut r = self.k1.apply(&d);
        r.iter_mut().zip(&self.residual).for_each(|(v, a)| *v += a);
        r
    }

    /// `J̃_k(x)`.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        let g = self.g.g_value(x);
        if !g.is_finite() {
            return Ok(f64::INFINITY);
        }
        let f1 = 0.5 * dot_self(&self.linearized_residual(x));
        Ok(g + f1 + self.f2.value(&self.k2.value(x)?))
    }

    /// `J_k(x) = J̃_k(x) − (β/2)‖x − z^k‖²`.
    pub fn model_objective(&self, x: &[f64]) -> Result<f64> {
        let d = dist2(x, self.anchor());
        Ok(self.objective(x)? - 0.5 * self.g.beta * d * d)
    }
}

/// Builds `J̃_k` at `z`.
pub fn linearize_subproblem<'a, M: ResidualModel>(
    problem: &RipgnProblem<'a, M>,
    z: &[f64],
    beta: f64,
    t: f64,
) -> Result<Subproblem<'a>> {
    let reg = problem.regularization;
    if !reg.bounds.contains(z) {
        return Err(Error::Domain("linearisation point lies outside the admissible box".into()));
    }
    let (a, jac) = problem.model.linearize(z)?;
    let k1 = DenseOperator(jac);
    let mut b = k1.apply(z);
    b.iter_mut().zip(&a).for_each(|(v, r)| *v -= r);
    let (k2, f2) = penalty_blocks(reg, z.len());
    Ok(Subproblem {
        g: ProxGParams::new(t, beta, z.to_vec(), reg.bounds, reg.barrier)?,
        k1,
        f1: DualProx::QuadraticFit { weight: 1.0, offset: b },
        k2,
        f2,
        residual: a,
    })
}

const ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

/// `Ok(false)` when the iteration produced non-finite values.
pub(crate) fn run_checked<N1: NonlinearOperator, N2: NonlinearOperator>(
    solver: &mut PdpsSolver<'_, N1, N2>,
    iters: usize,
) -> Result<bool> {
    match solver.run(iters) {
        Ok(()) => Ok(true),
        Err(Error::Divergence { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

enum InnerOutcome {
    Solved { x: Vec<f64>, objective: f64, capped: bool },
    Diverged,
}

fn solve_subproblem(sub: &Subproblem<'_>, params: PdpsStepParams, config: &RipgnConfig, z: &[f64]) -> Result<InnerOutcome> {
    let options = PdpsOptions { dual_evaluation: DualEvaluation::Exact, ..PdpsOptions::default() };
    let mut solver = PdpsSolver::new(
        &sub.g,
        Linear(&sub.k1),
        &sub.f1,
        sub.k2,
        &sub.f2,
        params,
        options,
        z.to_vec(),
        vec![0.0; sub.k1.output_dim()],
        vec![0.0; sub.k2.output_dim()],
    )?;
    let mut capped = false;
    match config.inner_stop {
        InnerStop::Fixed => {
            if !run_checked(&mut solver, config.inner_iters)? {
                return Ok(InnerOutcome::Diverged);
            }
        }
        InnerStop::Residual { rho, chunk, cap } => loop {
            if !run_checked(&mut solver, chunk)? {
                return Ok(InnerOutcome::Diverged);
            }
            if residual_stop(norm2(solver.residual()), dist2(solver.x(), z), rho) {
                break;
            }
            if solver.iteration() >= cap {
                capped = true;
                break;
            }
        },
    }
    let mut objective = sub.objective(solver.x())?;
    if !(objective <= sub.objective(z)?) {
        // One retry with the budget doubled.
        let extra = match config.inner_stop {
            InnerStop::Fixed => config.inner_iters,
            InnerStop::Residual { .. } => solver.iteration(),
        };
        if !run_checked(&mut solver, extra)? {
            return Ok(InnerOutcome::Diverged);
        }
        objective = sub.objective(solver.x())?;
    }
    Ok(InnerOutcome::Solved { x: solver.x().to_vec(), objective, capped })
}

/// Runs the relaxed inexact proximal Gauss–Newton iteration from `z0`.
pub fn ripgn_solve<M: ResidualModel>(
    problem: &RipgnProblem<'_, M>,
    config: &RipgnConfig,
    z0: &[f64],
    mut hooks: RipgnHooks<'_>,
) -> Result<RipgnResult> {
    config.validate()?;
    let j0 = problem.objective(z0)?;
    if !j0.is_finite() {
        return Err(Error::Domain(format!("initial objective is {j0}")));
    }
    let l2 = penalty_norm(problem.regularization, config.norm_iters, config.seed);
    let start = hooks.clock.map_or(0.0, |c| c.now_ms());
    let mut trace = ConvergenceTrace { initial_objective: j0, ..Default::default() };
    let mut monitor = StagnationMonitor::new(config.stagnation, j0);
    let mut iterates = vec![z0.to_vec()];
    let mut z = z0.to_vec();
    let mut j = j0;
    let mut warning = false;
    let mut stop = StopReason::MaxIterations;

    for k in 1..=config.max_outer {
        let sub = linearize_subproblem(problem, &z, config.beta, config.t)?;
        let l1 = operator_norm(&sub.k1, config.norm_iters, config.seed.wrapping_add(k as u64));
        let params = step_lengths(config.t, l1, l2, config.delta, config.lambda)?;
        if let Some(obs) = hooks.observer.as_mut() {
            obs(k, &sub, &params);
        }
        let (x, sub_objective, capped) = match solve_subproblem(&sub, params, config, &z)? {
            InnerOutcome::Solved { x, objective, capped } => (x, objective, capped),
            InnerOutcome::Diverged => {
                stop = StopReason::Diverged;
                break;
            }
        };
        warning |= capped;
        let sub_at_anchor = sub.objective(&z)?;
        if !(sub_objective <= sub_at_anchor) {
            // A violation at rounding level means z is already stationary.
            if sub_objective - sub_at_anchor <= ROUNDING_SLACK * sub_at_anchor.abs().max(1.0) {
                stop = StopReason::FixedPoint;
            } else {
                warning = true;
                stop = StopReason::SafeguardFailure;
            }
            break;
        }
        let step_norm = dist2(&x, &z);
        if step_norm == 0.0 {
            stop = StopReason::FixedPoint;
            break;
        }

        let interpolate = |w: f64| -> Vec<f64> { z.iter().zip(&x).map(|(a, b)| (1.0 - w) * a + w * b).collect() };
        let state = LinesearchState { objective: j, step_norm_sq: step_norm * step_norm, beta: config.beta };
        let w = relaxation_linesearch(&config.linesearch, config.w, &state, |w| {
            let trial = interpolate(w);
            let a = problem.model.residual(&trial)?;
            Ok(CandidateEval {
                objective: 0.5 * dot_self(&a) + problem.regularization.value(&trial)?,
                residual_sq: dot_self(&a),
                linearized_residual_sq: dot_self(&sub.linearized_residual(&trial)),
            })
        })
        .w;
        let z_new = interpolate(w);
        let j_new = problem.objective(&z_new).unwrap_or(f64::INFINITY);
        trace.entries.push(TraceEntry {
            k,
            objective: j_new,
            step_norm,
            subproblem_objective: sub_objective,
            model_objective: sub.model_objective(&z_new)?,
            wall_ms: elapsed(hooks.clock, start),
            w,
        });
        if !j_new.is_finite() || j_new > config.divergence_factor * j0 {
            stop = StopReason::Diverged;
            break;
        }
        z = z_new;
        j = j_new;
        iterates.push(z.clone());
        if let Decision::ConfirmedStop { index } = monitor.push(j) {
            z = iterates.swap_remove(index);
            trace.discarded = trace.entries.split_off(index);
            stop = StopReason::Stagnation;
            break;
        }
    }
    Ok(RipgnResult { z, trace, stop, warning, diverged: stop == StopReason::Diverged })
}
