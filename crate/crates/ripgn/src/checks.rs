//! Acceptance criteria as callable checks. Each returns a
//! [`CriterionResult`]; the cheap ones are bundled by [`quick`], the desk
//! experiments share one [`DeskRuns`] computation.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ripgn_core::forward::{CemModel, DEFAULT_CONTACT_IMPEDANCE};
use ripgn_core::geometry::build_disc_mesh;
use ripgn_core::linalg::{dist2, norm2};
use ripgn_core::operator::{DenseOperator, Linear, LinearOperator};
use ripgn_core::pdps::{
    operator_norm, pdps_solve, step_lengths, DualEvaluation, DualProx, PdpsOptions, PdpsSolver, PdpsStepParams,
    TwoBlockProblem,
};
use ripgn_core::prox::{prox_barrier_box_quadratic, prox_box_quadratic, BallMode, ProxGParams};
use ripgn_core::regularizers::{Barrier, BoxSet};
use ripgn_core::ripgn::{
    ripgn_solve, stagnation_stop, Decision, RipgnHooks, RipgnProblem, StagnationRule, StopReason, Subproblem,
};

use crate::config::{RunConfig, Scheme, SolverKind};
use crate::dataset::relative_error;
use crate::experiment::{load_or_simulate, ripgn_config, run_solver, RunOutcome, Setup, StdClock};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, name: &'static str, passed: bool, detail: String) -> Self {
        Self { id, name, passed, detail }
    }

    fn from_error(id: u8, name: &'static str, err: impl fmt::Display) -> Self {
        Self::new(id, name, false, format!("error: {err}"))
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] criterion {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

fn desk_model() -> ripgn_core::Result<CemModel> {
    let cfg = RunConfig::default();
    CemModel::with_defaults(build_disc_mesh(cfg.radius, cfg.electrodes, cfg.electrode_width / cfg.radius, cfg.inv_h)?)
}

/// Smooth, clearly non-constant conductivity around the desk background.
fn test_sigma(model: &CemModel) -> Vec<f64> {
    let r = model.mesh().radius();
    model.mesh().nodes().iter().map(|p| 0.028 * (1.0 + 0.5 * p[0] / r + 2.0 * (p[1] / r).powi(2))).collect()
}

/// Directional derivatives of the currents against central differences.
pub fn jacobian_fd() -> CriterionResult {
    const NAME: &str = "Jacobian vs finite differences";
    let run = || -> ripgn_core::Result<(f64, usize)> {
        let model = desk_model()?;
        let n = model.n_sigma();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let sigma: Vec<f64> = (0..n).map(|_| 0.005 + 0.05 * rng.random::<f64>()).collect();
            let h: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let sol = model.forward_solve(&sigma)?;
            let jh = model.jacobian(&sigma, &sol)? * DVector::from_column_slice(&h);
            let eps = 1e-6 * norm2(&sigma) / norm2(&h);
            let shifted = |sign: f64| -> Vec<f64> { sigma.iter().zip(&h).map(|(s, d)| s + sign * eps * d).collect() };
            let (ip, im) = (model.currents(&shifted(1.0))?, model.currents(&shifted(-1.0))?);
            let fd: Vec<f64> = ip.iter().zip(&im).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            worst = worst.max(dist2(&fd, jh.as_slice()) / norm2(jh.as_slice()));
        }
        Ok((worst, n))
    };
    let start = Instant::now();
    match run() {
        Ok((worst, n)) => {
            let secs = start.elapsed().as_secs_f64();
            let passed = worst < 1e-5 && n <= 500 && secs < 120.0;
            CriterionResult::new(1, NAME, passed, format!("max relative error {worst:.2e} over 20 directions, {n} nodes, {secs:.1} s"))
        }
        Err(e) => CriterionResult::from_error(1, NAME, e),
    }
}

/// Kirchhoff sums, reciprocity and the `(σ, ζ) → (cσ, ζ/c)` symmetry.
pub fn forward_physics() -> CriterionResult {
    const NAME: &str = "forward-model physics";
    let run = || -> ripgn_core::Result<(f64, f64, f64)> {
        let model = desk_model()?;
        let l = model.n_electrodes();
        let sigma = test_sigma(&model);
        let i = model.currents(&sigma)?;
        let kirchhoff = (0..l)
            .map(|p| {
                let ip = &i[p * l..(p + 1) * l];
                ip.iter().sum::<f64>().abs() / norm2(ip)
            })
            .fold(0.0, f64::max);
        let scale = i.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut reciprocity = 0.0f64;
        for a in 0..l {
            for b in 0..a {
                reciprocity = reciprocity.max((i[a * l + b] - i[b * l + a]).abs() / scale);
            }
        }
        let c = 4.0;
        let scaled_model = CemModel::new(model.mesh().clone(), vec![DEFAULT_CONTACT_IMPEDANCE / c; l], model.excitation_volts())?;
        let scaled_sigma: Vec<f64> = sigma.iter().map(|s| c * s).collect();
        let i_scaled = scaled_model.currents(&scaled_sigma)?;
        let symmetry = i.iter().zip(&i_scaled).map(|(a, b)| (c * a - b).abs()).fold(0.0, f64::max) / (c * scale);
        Ok((kirchhoff, reciprocity, symmetry))
    };
    match run() {
        Ok((k, r, s)) => CriterionResult::new(
            2,
            NAME,
            k < 1e-12 && r < 1e-8 && s <= 1e-12,
            format!("Kirchhoff {k:.2e}, reciprocity {r:.2e}, scaling symmetry {s:.2e}"),
        ),
        Err(e) => CriterionResult::from_error(2, NAME, e),
    }
}

/// Minimiser of a convex scalar function on `[lo, hi]` by repeated grid
/// refinement.
fn grid_argmin(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const POINTS: usize = 201;
    let mut best = lo;
    for _ in 0..12 {
        let step = (hi - lo) / (POINTS - 1) as f64;
        let (i, _) = (0..POINTS)
            .map(|i| (i, f(lo + step * i as f64)))
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        best = lo + step * i as f64;
        let (a, b) = (best - step, best + step);
        lo = a.max(lo);
        hi = b.min(hi);
    }
    best
}

fn barrier_scalar(b: &Barrier, v: f64) -> f64 {
    if v < b.sigma_min {
        0.5 * (b.l_min * (v - b.sigma_min)).powi(2)
    } else if v > b.sigma_max {
        0.5 * (b.l_max * (v - b.sigma_max)).powi(2)
    } else {
        0.0
    }
}

/// Every proximal map against brute-force oracles, and Moreau identities.
pub fn prox_oracles() -> CriterionResult {
    const NAME: &str = "proximal oracles";
    let run = || -> ripgn_core::Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let (mut oracle_err, mut moreau_err) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            // Primal G prox, with and without barriers.
            let (t, beta, z, x) = (u(0.05, 5.0), u(0.0, 3.0), u(-2.0, 2.0), u(-6.0, 6.0));
            let (v_min, v_max) = (u(-4.0, -0.5), u(0.5, 4.0));
            let bounds = BoxSet::new(v_min, v_max)?;
            let plain = ProxGParams::new(t, beta, vec![z], bounds, None)?;
            let f = |v: f64| (v - x).powi(2) / (2.0 * t) + 0.5 * beta * (v - z).powi(2);
            oracle_err = oracle_err.max((prox_box_quadratic(&plain, &[x])[0] - grid_argmin(f, v_min, v_max)).abs());

            let bar = Barrier { l_min: u(0.0, 4.0), l_max: u(0.0, 4.0), sigma_min: u(-1.5, 0.0), sigma_max: u(0.0, 1.5) };
            let with_bar = ProxGParams::new(t, beta, vec![z], bounds, Some(bar))?;
            let fb = |v: f64| f(v) + barrier_scalar(&bar, v);
            oracle_err =
                oracle_err.max((prox_barrier_box_quadratic(&with_bar, &[x])[0] - grid_argmin(fb, v_min, v_max)).abs());

            // Dual quadratic fit: F(v) = (a/2)(v − c)², F*(y) = y²/(2a) + c y.
            let (s, a, c, y) = (u(0.01, 50.0), u(0.1, 10.0), u(-3.0, 3.0), u(-5.0, 5.0));
            let mut p = [y];
            DualProx::QuadraticFit { weight: a, offset: vec![c] }.apply(s, &mut p);
            let fq = |v: f64| s * (v * v / (2.0 * a) + c * v) + 0.5 * (v - y).powi(2);
            oracle_err = oracle_err.max((p[0] - grid_argmin(fq, -20.0, 20.0)).abs());
            let primal = (s * (y / s) + a * c) / (s + a);
            moreau_err = moreau_err.max((y - (p[0] + s * primal)).abs());

            // Plain ball: prox of s·δ_{[−α,α]} is the clip.
            let alpha = u(0.0, 3.0);
            let mut p = [y];
            DualProx::Ball { mode: BallMode::Plain, alpha }.apply(s, &mut p);
            oracle_err = oracle_err.max((p[0] - grid_argmin(|v| (v - y).powi(2), -alpha, alpha)).abs());
            let shrink = (y / s).signum() * ((y / s).abs() - alpha / s).max(0.0);
            moreau_err = moreau_err.max((y - (p[0] + s * shrink)).abs());

            // Group ball on one pair: variational inequality against random
            // feasible points, and the group soft-threshold identity.
            let g = [u(-5.0, 5.0), u(-5.0, 5.0)];
            let mut p = g;
            DualProx::Ball { mode: BallMode::Group, alpha }.apply(s, &mut p);
            oracle_err = oracle_err.max((p[0].hypot(p[1]) - alpha).max(0.0));
            let dist = (p[0] - g[0]).hypot(p[1] - g[1]);
            for _ in 0..200 {
                let (r, th) = (alpha * u(0.0, 1.0).sqrt(), u(0.0, std::f64::consts::TAU));
                let q = [r * th.cos(), r * th.sin()];
                let vi = (g[0] - p[0]) * (q[0] - p[0]) + (g[1] - p[1]) * (q[1] - p[1]);
                oracle_err = oracle_err.max(vi.max(0.0)).max((dist - (q[0] - g[0]).hypot(q[1] - g[1])).max(0.0));
            }
            let norm = (g[0] / s).hypot(g[1] / s);
            let factor = if norm > 0.0 { (1.0 - alpha / (s * norm)).max(0.0) } else { 0.0 };
            for k in 0..2 {
                moreau_err = moreau_err.max((g[k] - (p[k] + s * factor * g[k] / s)).abs());
            }
        }
        Ok((oracle_err, moreau_err))
    };
    match run() {
        Ok((o, m)) => CriterionResult::new(
            3,
            NAME,
            o <= 1e-6 && m <= 1e-10,
            format!("100 instances per map, oracle deviation {o:.2e}, Moreau deviation {m:.2e}"),
        ),
        Err(e) => CriterionResult::from_error(3, NAME, e),
    }
}

/// Two-block solver on a strongly convex quadratic with a known minimiser.
pub fn pdps_closed_form() -> CriterionResult {
    const NAME: &str = "primal-dual solver on a closed-form quadratic";
    let run = || -> ripgn_core::Result<(f64, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let (n, m1, m2) = (5, 8, 4);
        let a = DMatrix::from_fn(m1, n, |_, _| rng.random::<f64>() - 0.5);
        let r = DMatrix::from_fn(m2, n, |_, _| rng.random::<f64>() - 0.5);
        let b = DVector::from_fn(m1, |_, _| rng.random::<f64>() - 0.5);
        let mean = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let z = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let beta = 1.0;
        // ½‖Ax − b‖² + ‖R(x − m)‖² + (β/2)‖x − z‖².
        let h = a.tr_mul(&a) + r.tr_mul(&r) * 2.0 + DMatrix::identity(n, n) * beta;
        let rhs = a.tr_mul(&b) + r.tr_mul(&(&r * &mean)) * 2.0 + &z * beta;
        let exact = h.cholesky().expect("positive definite").solve(&rhs);

        let (k1, k2) = (DenseOperator(a), DenseOperator(r.clone()));
        let (l1, l2) = (operator_norm(&k1, 100, 1), operator_norm(&k2, 100, 2));
        let t = 1.0 / l1.max(l2);
        let params = step_lengths(t, l1, l2, 0.01, 1.0)?;
        let offset2 = (&r * &mean).as_slice().to_vec();
        let problem = TwoBlockProblem {
            g: ProxGParams::new(t, beta, z.as_slice().to_vec(), BoxSet::unbounded(), None)?,
            k1,
            f1: DualProx::QuadraticFit { weight: 1.0, offset: b.as_slice().to_vec() },
            k2,
            f2: DualProx::QuadraticFit { weight: 2.0, offset: offset2 },
        };
        let out = pdps_solve(&problem, &params, vec![0.0; n], vec![0.0; m1], vec![0.0; m2], 5000, PdpsOptions::default())?;
        let err = dist2(&out.x, exact.as_slice());

        // The step rule satisfies the step condition across scales.
        let mut all_ok = true;
        for _ in 0..1000 {
            let e = |rng: &mut ChaCha8Rng| 10f64.powf(12.0 * rng.random::<f64>() - 6.0);
            let (t, l1, l2, lambda) = (e(&mut rng), e(&mut rng), e(&mut rng), e(&mut rng));
            let delta = 1e-3 + 0.998 * rng.random::<f64>();
            all_ok &= step_lengths(t, l1, l2, delta, lambda)?.satisfies_condition();
        }
        Ok((err, all_ok))
    };
    match run() {
        Ok((err, ok)) => CriterionResult::new(
            4,
            NAME,
            err <= 1e-6 && ok,
            format!("distance to closed form after 5000 iterations {err:.2e}; step condition held on 1000 draws: {ok}"),
        ),
        Err(e) => CriterionResult::from_error(4, NAME, e),
    }
}

/// Hand-built objective traces with the decision each must produce.
pub fn stagnation_cases() -> Vec<(&'static str, Vec<f64>, Decision)> {
    use Decision::{ConfirmedStop as Stop, Continue, TentativeStop as Pending};
    let j = |decreases: &[f64]| -> Vec<f64> {
        let mut out = vec![1000.0];
        for d in decreases {
            out.push(out.last().unwrap() - d);
        }
        out
    };
    let cat = |parts: &[&[f64]]| -> Vec<f64> { parts.concat() };
    vec![
        ("steady large decreases", j(&[5.0; 15]), Continue),
        ("small steps before activation only", j(&cat(&[&[0.1; 7], &[5.0; 6]])), Continue),
        ("small from the start stops at activation", j(&[0.1; 12]), Stop { index: 8 }),
        ("exactly ten small steps", j(&[0.1; 10]), Stop { index: 8 }),
        ("nine small steps still pending", j(&[0.1; 9]), Pending { trigger: 8 }),
        ("trigger at 9", j(&cat(&[&[5.0; 8], &[0.2; 4]])), Stop { index: 9 }),
        ("first lookahead rescues", j(&cat(&[&[5.0; 8], &[0.2, 0.6], &[5.0; 3]])), Continue),
        ("second lookahead rescues", j(&cat(&[&[5.0; 8], &[0.2, 0.2, 0.7], &[5.0; 2]])), Continue),
        ("rescue then new trigger", j(&cat(&[&[5.0; 8], &[0.2, 3.0, 0.1, 0.1, 0.1]])), Stop { index: 11 }),
        ("threshold itself is not small", j(&cat(&[&[5.0; 8], &[0.5; 5]])), Continue),
        ("just below threshold", j(&cat(&[&[5.0; 8], &[0.499_999; 3]])), Stop { index: 9 }),
        ("objective increase counts as small", j(&cat(&[&[5.0; 10], &[-2.0, 0.2, 0.1]])), Stop { index: 11 }),
        ("increase in lookahead does not rescue", j(&cat(&[&[5.0; 9], &[0.3, -4.0, 0.0]])), Stop { index: 10 }),
        ("late trigger", j(&cat(&[&[5.0; 20], &[0.0; 3]])), Stop { index: 21 }),
        ("late trigger pending", j(&cat(&[&[5.0; 20], &[0.0]])), Pending { trigger: 21 }),
        ("alternating small and large", j(&cat(&[&[5.0; 8], &[0.1, 1.0, 0.1, 1.0, 0.1, 1.0]])), Continue),
        ("two small then rescue at the edge", j(&cat(&[&[5.0; 8], &[0.1, 0.1, 0.5]])), Continue),
        ("stop ignores later values", j(&cat(&[&[5.0; 8], &[0.1, 0.1, 0.1], &[50.0; 4]])), Stop { index: 9 }),
        ("empty trace", vec![], Continue),
        ("single value", vec![42.0], Continue),
    ]
}

/// The outer stopping rule on [`stagnation_cases`].
pub fn stopping_rule_conformance() -> CriterionResult {
    let rule = StagnationRule::default();
    let mut failures = Vec::new();
    let cases = stagnation_cases();
    for (name, trace, expected) in &cases {
        let got = stagnation_stop(&rule, trace);
        if got != *expected {
            failures.push(format!("{name}: expected {expected:?}, got {got:?}"));
        }
    }
    let rule_ok = rule.threshold == 0.5 && rule.activation == 8 && rule.lookahead == 2 && rule.min_iterations() == 10;
    let passed = failures.is_empty() && rule_ok && cases.len() == 20;
    let detail = if failures.is_empty() {
        format!("{} cases matched (threshold 0.5, activation 8, lookahead 2)", cases.len())
    } else {
        failures.join("; ")
    };
    CriterionResult::new(10, "stagnation rule conformance", passed, detail)
}

/// Criteria that run in seconds.
pub fn quick() -> Vec<CriterionResult> {
    vec![jacobian_fd(), forward_physics(), prox_oracles(), pdps_closed_form(), stopping_rule_conformance()]
}

/// Relaxation weights of the descent and trend studies.
pub const DESK_WS: [f64; 3] = [0.25, 0.5, 0.75];

/// Subproblem indices of the balancing study.
pub const BALANCING_KS: std::ops::RangeInclusive<usize> = 2..=6;

/// Balanced vs unbalanced subproblem objectives at one outer index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancingSample {
    pub k: usize,
    pub balanced: f64,
    pub unbalanced: f64,
}

/// Desk-phantom runs shared by criteria 5–8.
pub struct DeskRuns {
    pub setup: Setup,
    pub config: RunConfig,
    /// `(scheme, w, outcome)` for every scheme and each of [`DESK_WS`].
    pub runs: Vec<(Scheme, f64, RunOutcome)>,
    /// Plain Gauss–Newton on the TV scheme.
    pub gauss_newton: RunOutcome,
    pub balancing: Vec<BalancingSample>,
    /// Wall time of the descent study alone.
    pub descent_seconds: f64,
}

impl DeskRuns {
    pub fn get(&self, scheme: Scheme, w: f64) -> &RunOutcome {
        &self.runs.iter().find(|(s, ww, _)| *s == scheme && *ww == w).expect("run exists").2
    }
}

fn solve_with(sub: &Subproblem<'_>, params: PdpsStepParams, iters: usize) -> ripgn_core::Result<f64> {
    let options = PdpsOptions { dual_evaluation: DualEvaluation::Exact, ..PdpsOptions::default() };
    let z = sub.anchor().to_vec();
    let mut solver = PdpsSolver::new(
        &sub.g,
        Linear(&sub.k1),
        &sub.f1,
        sub.k2,
        &sub.f2,
        params,
        options,
        z,
        vec![0.0; sub.k1.output_dim()],
        vec![0.0; ripgn_core::operator::NonlinearOperator::output_dim(&sub.k2)],
    )?;
    solver.run(iters)?;
    sub.objective(solver.x())
}

/// Unbalanced steps `s1 = s2 = (1−δ)/(t L²)` with `L² = L1² + L2²`, the
/// norm bound of the stacked operator. They meet the two-block step
/// condition with `λ = L2²/L1²`.
pub fn unbalanced_steps(p: &PdpsStepParams) -> PdpsStepParams {
    let (l1sq, l2sq) = (p.l1 * p.l1, p.l2 * p.l2);
    let s = (1.0 - p.delta) / (p.t * (l1sq + l2sq));
    PdpsStepParams { s1: s, s2: s, lambda: l2sq / l1sq, ..*p }
}

/// Runs every scheme at each relaxation weight, plain Gauss–Newton on TV,
/// and the balancing study inside the TV `w = 3/4` run.
pub fn desk_runs(config: &RunConfig) -> Result<DeskRuns> {
    let setup = Setup::new(load_or_simulate(config)?, config)?;
    let mut runs = Vec::new();
    let mut balancing = Vec::new();
    let mut descent_seconds = 0.0;
    for scheme in [Scheme::Tv, Scheme::SmoothedTv, Scheme::Smooth] {
        let reg = setup.regularization(config, scheme)?;
        for w in DESK_WS {
            let cfg = RunConfig { scheme, solver: SolverKind::Ripgn, w, beta: 1e-10, inner_iters: 6000, ..config.clone() };
            let start = Instant::now();
            let outcome = if scheme == Scheme::Tv && w == 0.75 {
                let misfit = setup.misfit()?;
                let problem = RipgnProblem { model: &misfit, regularization: &reg };
                let clock = StdClock::default();
                let mut failure = None;
                let mut observer = |k: usize, sub: &Subproblem<'_>, params: &PdpsStepParams| {
                    if !BALANCING_KS.contains(&k) || failure.is_some() {
                        return;
                    }
                    let b = solve_with(sub, *params, cfg.inner_iters);
                    let u = solve_with(sub, unbalanced_steps(params), cfg.inner_iters);
                    match (b, u) {
                        (Ok(balanced), Ok(unbalanced)) => balancing.push(BalancingSample { k, balanced, unbalanced }),
                        (Err(e), _) | (_, Err(e)) => failure = Some(e),
                    }
                };
                let hooks = RipgnHooks { clock: Some(&clock), observer: Some(&mut observer) };
                let r = ripgn_solve(&problem, &ripgn_config(&cfg), &setup.z0(), hooks)?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                RunOutcome { z: r.z, trace: r.trace, stop: r.stop, warning: r.warning, diverged: r.diverged, wall_ms: clock_ms(&clock) }
            } else {
                run_solver(&setup, &cfg, &reg)?
            };
            descent_seconds += start.elapsed().as_secs_f64();
            runs.push((scheme, w, outcome));
        }
    }
    let gn_cfg = RunConfig { scheme: Scheme::Tv, solver: SolverKind::Gn, ..config.clone() };
    let gauss_newton = run_solver(&setup, &gn_cfg, &setup.regularization(&gn_cfg, Scheme::Tv)?)?;
    Ok(DeskRuns { setup, config: config.clone(), runs, gauss_newton, balancing, descent_seconds })
}

fn clock_ms(clock: &StdClock) -> f64 {
    ripgn_core::ripgn::Clock::now_ms(clock)
}

fn strictly_decreasing(o: &RunOutcome) -> bool {
    let j = o.trace.objectives();
    j.len() >= 2 && j.windows(2).all(|w| w[1] < w[0])
}

/// Strict decrease of `J(z^k)` for every scheme and weight.
pub fn descent(d: &DeskRuns) -> CriterionResult {
    let mut bad = Vec::new();
    for (scheme, w, o) in &d.runs {
        let stop_ok = matches!(o.stop, StopReason::Stagnation | StopReason::FixedPoint | StopReason::MaxIterations);
        if !strictly_decreasing(o) || !stop_ok || o.diverged {
            bad.push(format!("{} w={w} ({:?}, {} its)", scheme.key(), o.stop, o.iterations()));
        }
    }
    let passed = bad.is_empty() && d.descent_seconds < 1800.0;
    let detail = format!(
        "{} runs, {} non-monotone{}; {:.0} s total",
        d.runs.len(),
        bad.len(),
        if bad.is_empty() { String::new() } else { format!(" [{}]", bad.join(", ")) },
        d.descent_seconds
    );
    CriterionResult::new(5, "descent of the outer iteration", passed, detail)
}

/// Fewer outer iterations for larger `w`; plain Gauss–Newton fails.
pub fn relaxation_trend(d: &DeskRuns) -> CriterionResult {
    let tv: Vec<&RunOutcome> = DESK_WS.iter().map(|&w| d.get(Scheme::Tv, w)).collect();
    let counts: Vec<usize> = tv.iter().map(|o| o.iterations()).collect();
    let all_stagnated = tv.iter().all(|o| o.stop == StopReason::Stagnation);
    let ordered = counts[0] > counts[1] && counts[1] > counts[2];
    let gn = &d.gauss_newton;
    let j34 = tv[2].trace.final_objective();
    let j_gn = gn.trace.final_objective();
    let gn_fails = gn.diverged || !(j_gn < 2.0 * j34);
    CriterionResult::new(
        6,
        "relaxation trend",
        all_stagnated && ordered && gn_fails,
        format!(
            "TV iterations w=1/4,1/2,3/4: {counts:?} (all stagnation stops: {all_stagnated}); GN diverged={} final J {j_gn:.4e} vs w=3/4 {j34:.4e}",
            gn.diverged
        ),
    )
}

/// Balanced dual steps against the unbalanced choice.
pub fn balancing(d: &DeskRuns) -> CriterionResult {
    let wins = d.balancing.iter().filter(|s| s.balanced <= s.unbalanced).count();
    let detail = d
        .balancing
        .iter()
        .map(|s| format!("k={}: {:.5e} vs {:.5e}", s.k, s.balanced, s.unbalanced))
        .collect::<Vec<_>>()
        .join(", ");
    CriterionResult::new(
        7,
        "balanced vs unbalanced dual steps",
        d.balancing.len() == 5 && wins >= 4,
        format!("{wins}/{} balanced wins [{detail}]", d.balancing.len()),
    )
}

/// TV reconstruction error against `σ^1`, and smoothed TV against TV.
pub fn reconstruction_quality(d: &DeskRuns) -> CriterionResult {
    let Some(truth) = &d.setup.dataset.sigma_true else {
        return CriterionResult::new(8, "reconstruction quality", false, "dataset has no true conductivity".into());
    };
    let run = || -> ripgn_core::Result<(f64, f64, f64, f64)> {
        let tv = d.get(Scheme::Tv, 0.75);
        let re_tv = relative_error(&tv.z, truth)?;
        let re_1 = relative_error(&d.setup.z0(), truth)?;
        let j_tv = tv.trace.final_objective();
        let j_stv = d.get(Scheme::SmoothedTv, 0.75).trace.final_objective();
        Ok((re_tv, re_1, j_tv, j_stv))
    };
    match run() {
        Ok((re_tv, re_1, j_tv, j_stv)) => {
            let gap = (j_stv - j_tv).abs() / j_tv;
            CriterionResult::new(
                8,
                "reconstruction quality",
                re_tv <= 0.5 * re_1 && gap <= 0.1,
                format!("RE TV {re_tv:.2}% vs σ¹ {re_1:.2}%; J smoothed TV {j_stv:.4e} vs TV {j_tv:.4e} ({:.2}%)", 100.0 * gap),
            )
        }
        Err(e) => CriterionResult::from_error(8, "reconstruction quality", e),
    }
}

/// Newton and NL-PDPS against RIPGN on smoothed TV on a small mesh.
pub fn cross_agreement(config: &RunConfig) -> CriterionResult {
    const NAME: &str = "solver cross-agreement";
    let run = || -> Result<(usize, [RunOutcome; 3])> {
        let setup = Setup::new(load_or_simulate(config)?, config)?;
        let reg = setup.regularization(config, Scheme::SmoothedTv)?;
        let base = RunConfig { scheme: Scheme::SmoothedTv, w: 0.75, ..config.clone() };
        let ripgn = run_solver(&setup, &RunConfig { solver: SolverKind::Ripgn, ..base.clone() }, &reg)?;
        let newton = run_solver(&setup, &RunConfig { solver: SolverKind::Newton, ..base.clone() }, &reg)?;
        let nlpdps = run_solver(&setup, &RunConfig { solver: SolverKind::NlPdps, nlpdps_factor: 20, ..base }, &reg)?;
        Ok((setup.n_nodes(), [ripgn, newton, nlpdps]))
    };
    match run() {
        Ok((n, [r, nw, nl])) => {
            let jr = r.trace.final_objective();
            let (jn, jl) = (nw.trace.final_objective(), nl.trace.final_objective());
            let (gn, gl) = ((jn - jr).abs() / jr, (jl - jr).abs() / jr);
            CriterionResult::new(
                9,
                NAME,
                n <= 300 && gn <= 0.02 && gl <= 0.05,
                format!(
                    "{n} nodes; J RIPGN {jr:.5e} ({} its), Newton {jn:.5e} ({:.2}%, {} its), NL-PDPS {jl:.5e} ({:.2}%, {} its)",
                    r.iterations(),
                    100.0 * gn,
                    nw.iterations(),
                    100.0 * gl,
                    nl.iterations()
                ),
            )
        }
        Err(e) => CriterionResult::from_error(9, NAME, e),
    }
}
