//! Reference solvers: damped Newton and the primal-dual method applied to the
//! full nonlinear problem.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{
    elapsed, penalty_blocks, penalty_norm, run_checked, Clock, ConvergenceTrace, Decision, RipgnProblem, StagnationMonitor,
    StagnationRule, StopReason, TraceEntry,
};
use crate::linalg::{dist2, dot, norm2};
use crate::operator::{NonlinearOperator, ResidualModel};
use crate::pdps::{operator_norm, step_lengths, DualEvaluation, DualProx, PdpsOptions, PdpsSolver};
use crate::prox::ProxGParams;
use crate::regularizers::Regularization;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub z: Vec<f64>,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
    /// A Jacobian norm check exceeded the frozen `L1` (primal-dual only).
    pub norm_exceeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub armijo_c: f64,
    pub max_backtracks: usize,
    pub max_iters: usize,
    pub stagnation: StagnationRule,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { armijo_c: 1e-4, max_backtracks: 30, max_iters: 100, stagnation: StagnationRule::default() }
    }
}

/// Solves `H d = rhs`, adding a growing multiple of the identity until the
/// Cholesky factorisation succeeds.
fn solve_shifted(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut mu = 1e-10 * scale;
    for _ in 0..24 {
        let mut shifted = h.clone();
        for i in 0..h.nrows() {
            shifted[(i, i)] += mu;
        }
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.solve(rhs));
        }
        mu *= 10.0;
    }
    Err(Error::Factorization { reason: "Newton system stays indefinite under Levenberg shifts".into(), condition: f64::INFINITY })
}

/// Damped Newton iteration with a Gauss–Newton misfit Hessian and
/// projected Armijo backtracking. `w` in the trace is the accepted step size.
pub fn newton_baseline<M: ResidualModel>(
    problem: &RipgnProblem<'_, M>,
    z0: &[f64],
    config: &NewtonConfig,
    clock: Option<&dyn Clock>,
) -> Result<BaselineResult> {
    let reg = problem.regularization;
    if !reg.is_smooth() {
        return Err(Error::Config("Newton baseline needs a differentiable regulariser".into()));
    }
    let j0 = problem.objective(z0)?;
    if !j0.is_finite() {
        return Err(Error::Domain(alloc::format!("initial objective is {j0}")));
    }
    let start = clock.map_or(0.0, |c| c.now_ms());
    let mut trace = ConvergenceTrace { initial_objective: j0, ..Default::default() };
    let mut monitor = StagnationMonitor::new(config.stagnation, j0);
    let mut iterates = vec![z0.to_vec()];
    let mut z = z0.to_vec();
    let mut j = j0;
    let mut stop = StopReason::MaxIterations;

    for k in 1..=config.max_iters {
        let (a, jac) = problem.model.linearize(&z)?;
        let (g_reg, h_reg) = reg.gradient_hessian(&z)?;
        let grad = jac.tr_mul(&DVector::from_vec(a)) + DVector::from_vec(g_reg);
        let hess = jac.tr_mul(&jac) + h_reg;
        if grad.norm() == 0.0 {
            stop = StopReason::FixedPoint;
            break;
        }
        let d = solve_shifted(&hess, &(-&grad))?;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial: Vec<f64> = z.iter().zip(d.iter()).map(|(zi, di)| reg.bounds.project(zi + alpha * di)).collect();
            let step: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
            let slope = dot(grad.as_slice(), &step);
            let jt = problem.objective(&trial).unwrap_or(f64::INFINITY);
            if jt.is_finite() && jt < j && jt <= j + config.armijo_c * slope {
                let s = DVector::from_column_slice(&step);
                let model = j + slope + 0.5 * s.dot(&(&hess * &s));
                accepted = Some((trial, jt, norm2(&step), model, alpha));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, jt, step_norm, model, alpha)) = accepted else {
            stop = StopReason::NoDescent;
            break;
        };
        trace.entries.push(TraceEntry {
            k,
            objective: jt,
            step_norm,
            subproblem_objective: model,
            model_objective: model,
            wall_ms: elapsed(clock, start),
            w: alpha,
        });
        z = trial;
        j = jt;
        iterates.push(z.clone());
        if let Decision::ConfirmedStop { index } = monitor.push(j) {
            z = iterates.swap_remove(index);
            trace.discarded = trace.entries.split_off(index);
            stop = StopReason::Stagnation;
            break;
        }
    }
    Ok(BaselineResult { z, trace, stop, norm_exceeded: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlPdpsConfig {
    pub t: f64,
    pub delta: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub stagnation: StagnationRule,
    pub dual_evaluation: DualEvaluation,
    /// Re-estimate the Jacobian norm every this many iterations (0 = never).
    pub norm_check_every: usize,
    pub norm_iters: usize,
    pub divergence_factor: f64,
    pub seed: u64,
}

impl Default for NlPdpsConfig {
    fn default() -> Self {
        Self {
            t: 1e-6,
            delta: 0.01,
            lambda: 1.0,
            max_iters: 120_000,
            stagnation: StagnationRule::nlpdps(),
            dual_evaluation: DualEvaluation::Linearized,
            norm_check_every: 0,
            norm_iters: 50,
            divergence_factor: 10.0,
            seed: 0,
        }
    }
}

/// Primal-dual iteration on `½‖A(x)‖² + F(x)` with `A` nonlinear. `L1` is
/// the norm of `∇A(z0)` and stays frozen; every iterate is recorded.
pub fn nlpdps_baseline<A: NonlinearOperator>(
    misfit: &A,
    reg: &Regularization,
    z0: &[f64],
    config: &NlPdpsConfig,
    clock: Option<&dyn Clock>,
) -> Result<BaselineResult> {
    let n = z0.len();
    let m = misfit.output_dim();
    let g = ProxGParams::new(config.t, 0.0, z0.to_vec(), reg.bounds, reg.barrier)?;
    let f1 = DualProx::QuadraticFit { weight: 1.0, offset: vec![0.0; m] };
    let (k2, f2) = penalty_blocks(reg, n);
    let l1 = operator_norm(&misfit.jacobian(z0)?, config.norm_iters, config.seed);
    let l2 = penalty_norm(reg, config.norm_iters, config.seed);
    let params = step_lengths(config.t, l1, l2, config.delta, config.lambda)?;
    let options = PdpsOptions {
        dual_evaluation: config.dual_evaluation,
        norm_check_every: config.norm_check_every,
        ..PdpsOptions::default()
    };
    let m2 = k2.output_dim();
    let mut solver = PdpsSolver::new(&g, misfit, &f1, k2, &f2, params, options, z0.to_vec(), vec![0.0; m], vec![0.0; m2])?;

    let start = clock.map_or(0.0, |c| c.now_ms());
    let j0 = solver.objective()?;
    if !j0.is_finite() {
        return Err(Error::Domain(alloc::format!("initial objective is {j0}")));
    }
    let mut trace = ConvergenceTrace { initial_objective: j0, ..Default::default() };
    let mut monitor = StagnationMonitor::new(config.stagnation, j0);
    let window = config.stagnation.lookahead + 1;
    let mut recent: VecDeque<(usize, Vec<f64>)> = VecDeque::with_capacity(window + 1);
    let mut z = z0.to_vec();
    let mut stop = StopReason::MaxIterations;

    for k in 1..=config.max_iters {
        let prev = solver.x().to_vec();
        if !run_checked(&mut solver, 1)? {
            stop = StopReason::Diverged;
            break;
        }
        let j = solver.objective().unwrap_or(f64::INFINITY);
        trace.entries.push(TraceEntry {
            k,
            objective: j,
            step_norm: dist2(solver.x(), &prev),
            subproblem_objective: j,
            model_objective: j,
            wall_ms: elapsed(clock, start),
            w: 1.0,
        });
        if !j.is_finite() || j > config.divergence_factor * j0 {
            stop = StopReason::Diverged;
            break;
        }
        z.copy_from_slice(solver.x());
        recent.push_back((k, z.clone()));
        if recent.len() > window {
            recent.pop_front();
        }
        if let Decision::ConfirmedStop { index } = monitor.push(j) {
            if let Some((_, x)) = recent.iter().find(|(i, _)| *i == index) {
                z.clone_from(x);
            }
            trace.discarded = trace.entries.split_off(index);
            stop = StopReason::Stagnation;
            break;
        }
    }
    let norm_exceeded = solver.into_output().norm_exceeded;
    Ok(BaselineResult { z, trace, stop, norm_exceeded })
}
