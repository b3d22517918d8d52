//! Experiment orchestration: dataset preparation, solver dispatch, output
//! bundles and sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ripgn_core::forward::{CemModel, EitMisfit};
use ripgn_core::geometry::{build_disc_mesh, Mesh2D};
use ripgn_core::regularizers::{build_smoothness_prior, build_tv_operator, Barrier, BoxSet, Penalty, Regularization};
use ripgn_core::ripgn::{
    newton_baseline, nlpdps_baseline, ripgn_solve, Clock, ConvergenceTrace, InnerStop, NewtonConfig, NlPdpsConfig,
    RipgnConfig, RipgnHooks, RipgnProblem, StopReason,
};

use crate::config::{LaDiag, RunConfig, Scheme, SolverKind};
use crate::dataset::{auto_la_diag, homogeneous_fit, relative_error, simulate_dataset, Dataset, NOISE_RNG};
use crate::error::{HarnessError, Result};
use crate::io::{self, Summary, RASTER_SIZE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_WARNING: i32 = 4;

/// Wall clock measured from construction.
pub struct StdClock(Instant);

impl Default for StdClock {
    fn default() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn disc_mesh(cfg: &RunConfig, h: f64) -> Result<Mesh2D> {
    Ok(build_disc_mesh(cfg.radius, cfg.electrodes, cfg.electrode_width / cfg.radius, h)?)
}

pub fn inversion_mesh(cfg: &RunConfig) -> Result<Mesh2D> {
    match &cfg.inversion_mesh {
        Some(p) => io::read_mesh(p),
        None => disc_mesh(cfg, cfg.inv_h),
    }
}

pub fn simulation_mesh(cfg: &RunConfig) -> Result<Mesh2D> {
    match &cfg.simulation_mesh {
        Some(p) => io::read_mesh(p),
        None => disc_mesh(cfg, cfg.sim_h),
    }
}

/// Simulates the configured phantom on the simulation mesh.
pub fn simulate(cfg: &RunConfig) -> Result<Dataset> {
    let phantom = cfg.phantom()?;
    Ok(simulate_dataset(&phantom, simulation_mesh(cfg)?, inversion_mesh(cfg)?, cfg.noise_rel, cfg.seed)?)
}

/// Reads `cfg.dataset` when given, otherwise simulates.
pub fn load_or_simulate(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(p) => io::read_dataset(p),
        None => simulate(cfg),
    }
}

/// Everything derived from a dataset that does not depend on the scheme.
pub struct Setup {
    pub dataset: Dataset,
    pub model: CemModel,
    pub la_diag: f64,
    /// Homogeneous estimate `σ^1`.
    pub sigma1: f64,
}

impl Setup {
    /// Builds the inversion model. Only the inversion mesh is available
    /// here; data from a simulation no finer than it is refused.
    pub fn new(dataset: Dataset, cfg: &RunConfig) -> Result<Self> {
        if dataset.simulation_nodes <= dataset.inversion_mesh.n_nodes() {
            return Err(HarnessError::Config(format!(
                "data simulated on {} nodes cannot be inverted on {} nodes (inverse crime)",
                dataset.simulation_nodes,
                dataset.inversion_mesh.n_nodes()
            )));
        }
        let model = CemModel::with_defaults(dataset.inversion_mesh.clone())?;
        let la_diag = match cfg.la_diag {
            LaDiag::Auto => auto_la_diag(&dataset.measurements, dataset.noise_rel)?,
            LaDiag::Fixed(v) => v,
        };
        let mut setup = Setup { dataset, model, la_diag, sigma1: 0.0 };
        setup.sigma1 = homogeneous_fit(&setup.misfit()?)?;
        Ok(setup)
    }

    pub fn misfit(&self) -> Result<EitMisfit<'_>> {
        Ok(EitMisfit::with_scalar_weight(&self.model, self.dataset.measurements.clone(), self.la_diag)?)
    }

    pub fn z0(&self) -> Vec<f64> {
        vec![self.sigma1; self.model.n_sigma()]
    }

    pub fn n_nodes(&self) -> usize {
        self.model.n_sigma()
    }

    /// Barrier thresholds, strength scales and box for `scheme`, after
    /// config overrides.
    fn limits(cfg: &RunConfig, scheme: Scheme) -> (Option<(f64, f64, f64, f64)>, BoxSet) {
        let (barrier, v) = match scheme {
            Scheme::Smooth => (Some((1e-4, f64::INFINITY, cfg.l_min_scale, 0.0)), (1e-8, 1e12)),
            Scheme::SmoothedTv => (Some((1e-4, 1e10, cfg.l_min_scale, cfg.l_max_scale)), (1e-8, 1e12)),
            Scheme::Tv => (None, (1e-4, 1e12)),
        };
        let barrier = barrier.map(|(lo, hi, sl, sh)| (cfg.sigma_min.unwrap_or(lo), cfg.sigma_max.unwrap_or(hi), sl, sh));
        let bounds = BoxSet { v_min: cfg.v_min.unwrap_or(v.0), v_max: cfg.v_max.unwrap_or(v.1) };
        (barrier, bounds)
    }

    /// Scheme regularization with barrier strengths `scale·sqrt(2J(σ^1))`,
    /// `J` including the penalty.
    pub fn regularization(&self, cfg: &RunConfig, scheme: Scheme) -> Result<Regularization> {
        let mesh = self.model.mesh();
        let penalty = match scheme {
            Scheme::Smooth => Penalty::Smoothness(build_smoothness_prior(mesh, cfg.prior_a, cfg.prior_b, self.z0())?),
            Scheme::Tv => Penalty::Tv { op: build_tv_operator(mesh, self.model.geometry()), alpha: cfg.alpha },
            Scheme::SmoothedTv => {
                if !(cfg.gamma > 0.0) {
                    return Err(HarnessError::Config(format!("smoothed TV needs gamma > 0, got {}", cfg.gamma)));
                }
                Penalty::SmoothedTv { op: build_tv_operator(mesh, self.model.geometry()), alpha: cfg.alpha, gamma: cfg.gamma }
            }
        };
        let (limits, bounds) = Self::limits(cfg, scheme);
        let bounds = BoxSet::new(bounds.v_min, bounds.v_max)?;
        let mut reg = Regularization { penalty, bounds, barrier: None };
        if let Some((sigma_min, sigma_max, s_lo, s_hi)) = limits {
            let j1 = RipgnProblem { model: &self.misfit()?, regularization: &reg }.objective(&self.z0())?;
            let root = (2.0 * j1).sqrt();
            reg.barrier = Some(Barrier { l_min: s_lo * root, l_max: s_hi * root, sigma_min, sigma_max });
        }
        Ok(reg)
    }
}

pub fn ripgn_config(cfg: &RunConfig) -> RipgnConfig {
    let (w, beta) = if cfg.solver == SolverKind::Gn { (1.0, 0.0) } else { (cfg.w, cfg.beta) };
    let inner_stop = match cfg.rho {
        Some(rho) => InnerStop::Residual { rho, chunk: (cfg.inner_iters / 10).max(1), cap: 4 * cfg.inner_iters },
        None => InnerStop::Fixed,
    };
    RipgnConfig {
        w,
        beta,
        t: cfg.t,
        delta: cfg.delta,
        lambda: cfg.lambda,
        inner_iters: cfg.inner_iters,
        max_outer: cfg.max_outer,
        inner_stop,
        seed: cfg.seed,
        ..RipgnConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub z: Vec<f64>,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
    pub warning: bool,
    pub diverged: bool,
    pub wall_ms: f64,
}

impl RunOutcome {
    /// Accepted outer iterations.
    pub fn iterations(&self) -> usize {
        self.trace.entries.len()
    }

    pub fn exit_code(&self) -> i32 {
        if self.diverged {
            EXIT_DIVERGED
        } else if self.warning {
            EXIT_WARNING
        } else {
            EXIT_OK
        }
    }
}

/// Runs the configured solver from `σ^1`.
pub fn run_solver(setup: &Setup, cfg: &RunConfig, reg: &Regularization) -> Result<RunOutcome> {
    let clock = StdClock::default();
    let misfit = setup.misfit()?;
    let problem = RipgnProblem { model: &misfit, regularization: reg };
    let z0 = setup.z0();
    let mut out = match cfg.solver {
        SolverKind::Ripgn | SolverKind::Gn => {
            let hooks = RipgnHooks { clock: Some(&clock), observer: None };
            let r = ripgn_solve(&problem, &ripgn_config(cfg), &z0, hooks)?;
            RunOutcome { z: r.z, trace: r.trace, stop: r.stop, warning: r.warning, diverged: r.diverged, wall_ms: 0.0 }
        }
        SolverKind::Newton => {
            if !reg.is_smooth() {
                return Err(HarnessError::Config("the Newton baseline needs a differentiable scheme".into()));
            }
            let nc = NewtonConfig { max_iters: cfg.newton_max_iters, ..NewtonConfig::default() };
            baseline_outcome(newton_baseline(&problem, &z0, &nc, Some(&clock))?)
        }
        SolverKind::NlPdps => {
            let nc = NlPdpsConfig {
                t: cfg.t,
                delta: cfg.delta,
                lambda: cfg.lambda,
                max_iters: cfg.nlpdps_factor * cfg.inner_iters,
                seed: cfg.seed,
                ..NlPdpsConfig::default()
            };
            baseline_outcome(nlpdps_baseline(&misfit, reg, &z0, &nc, Some(&clock))?)
        }
    };
    out.wall_ms = clock.now_ms();
    Ok(out)
}

fn baseline_outcome(r: ripgn_core::ripgn::BaselineResult) -> RunOutcome {
    let diverged = r.stop == StopReason::Diverged;
    RunOutcome { z: r.z, trace: r.trace, stop: r.stop, warning: r.norm_exceeded, diverged, wall_ms: 0.0 }
}

pub fn stop_key(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Stagnation => "stagnation",
        StopReason::MaxIterations => "max_iterations",
        StopReason::FixedPoint => "fixed_point",
        StopReason::Diverged => "diverged",
        StopReason::SafeguardFailure => "safeguard_failure",
        StopReason::NoDescent => "no_descent",
    }
}

pub fn summarize(setup: &Setup, cfg: &RunConfig, outcome: &RunOutcome) -> Result<Summary> {
    let mut s = Summary::default();
    s.push("scheme", cfg.scheme.key());
    s.push("solver", cfg.solver.key());
    let rc = ripgn_config(cfg);
    s.push("w", rc.w);
    s.push("beta", rc.beta);
    s.push("t", cfg.t);
    s.push("inner_iters", cfg.inner_iters);
    s.push("inversion_nodes", setup.n_nodes());
    s.push("simulation_nodes", setup.dataset.simulation_nodes);
    s.push("la_diag", setup.la_diag);
    s.push("sigma1", setup.sigma1);
    s.push("initial_objective", outcome.trace.initial_objective);
    s.push("final_objective", outcome.trace.final_objective());
    s.push("iterations", outcome.iterations());
    s.push("stop", stop_key(outcome.stop));
    s.push("diverged", outcome.diverged);
    s.push("warning", outcome.warning);
    if let Some(truth) = &setup.dataset.sigma_true {
        s.push("relative_error_percent", relative_error(&outcome.z, truth)?);
        s.push("sigma1_relative_error_percent", relative_error(&setup.z0(), truth)?);
    }
    s.push("wall_seconds", outcome.wall_ms / 1e3);
    s.push("noise_rng", NOISE_RNG);
    s.push("seed", setup.dataset.seed);
    s.push("noise_rel", setup.dataset.noise_rel);
    s.push("exit_code", outcome.exit_code());
    Ok(s)
}

/// Writes `reconstruction.csv`, `reconstruction.pgm`, `trace.txt`,
/// `summary.txt` and the effective `config.txt` into `dir`.
pub fn write_outputs(dir: &Path, setup: &Setup, cfg: &RunConfig, outcome: &RunOutcome, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
    let mesh = setup.model.mesh();
    let truth = setup.dataset.sigma_true.as_deref();
    io::write_file(&dir.join("reconstruction.csv"), io::nodal_csv(mesh, &outcome.z, truth))?;
    let lo = outcome.z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = outcome.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = io::rasterize(mesh, &outcome.z, RASTER_SIZE);
    io::write_file(&dir.join("reconstruction.pgm"), io::pgm16(&grid, RASTER_SIZE, (lo, hi)))?;
    io::write_file(&dir.join("trace.txt"), outcome.trace.to_text(cfg.trace_timing))?;
    let mut summary = summary.clone();
    summary.push("raster_min", lo);
    summary.push("raster_max", hi);
    io::write_file(&dir.join("summary.txt"), summary.to_text())?;
    io::write_file(&dir.join("config.txt"), cfg.to_text())
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub outcome: RunOutcome,
    pub summary: Summary,
    pub out_dir: PathBuf,
}

pub fn run_with_setup(setup: &Setup, cfg: &RunConfig, out_dir: &Path) -> Result<CaseReport> {
    let reg = setup.regularization(cfg, cfg.scheme)?;
    let outcome = run_solver(setup, cfg, &reg)?;
    let summary = summarize(setup, cfg, &outcome)?;
    write_outputs(out_dir, setup, cfg, &outcome, &summary)?;
    Ok(CaseReport { outcome, summary, out_dir: out_dir.to_path_buf() })
}

/// Homogeneous fit, then the configured solver; outputs go to `cfg.out_dir`.
pub fn run_case(cfg: &RunConfig) -> Result<CaseReport> {
    let setup = Setup::new(load_or_simulate(cfg)?, cfg)?;
    run_with_setup(&setup, cfg, &cfg.out_dir)
}

/// Runs every `(solver, w)` pair in its own directory under `cfg.out_dir`
/// and writes `sweep.txt`, one line per run. Baselines and plain
/// Gauss–Newton ignore `w` and run once.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<CaseReport>> {
    let setup = Setup::new(load_or_simulate(cfg)?, cfg)?;
    let mut runs = Vec::new();
    for &solver in &cfg.sweep_solvers {
        let ws: Vec<Option<f64>> =
            if solver == SolverKind::Ripgn { cfg.sweep_w.iter().copied().map(Some).collect() } else { vec![None] };
        for w in ws {
            let mut c = cfg.clone();
            c.solver = solver;
            let name = match w {
                Some(w) => {
                    c.w = w;
                    format!("{}_w{w}", solver.key())
                }
                None => solver.key().to_string(),
            };
            runs.push((name, c));
        }
    }
    let reports: Vec<Result<CaseReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(name, c)| {
                let setup = &setup;
                let dir = cfg.out_dir.join(name);
                scope.spawn(move || run_with_setup(setup, c, &dir))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = String::from("run iterations final_objective relative_error_percent wall_seconds stop\n");
    for ((name, _), r) in runs.iter().zip(&reports) {
        let s = &r.summary;
        table.push_str(&format!(
            "{name} {} {} {} {} {}\n",
            s.get("iterations").unwrap_or("-"),
            s.get("final_objective").unwrap_or("-"),
            s.get("relative_error_percent").unwrap_or("-"),
            s.get("wall_seconds").unwrap_or("-"),
            s.get("stop").unwrap_or("-"),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(crate::error::io_err(&cfg.out_dir))?;
    io::write_file(&cfg.out_dir.join("sweep.txt"), table)?;
    Ok(reports)
}

/// `J(σ_true)` on the inversion mesh for the given scheme, when known.
pub fn objective_at_truth(setup: &Setup, cfg: &RunConfig, scheme: Scheme) -> Result<Option<f64>> {
    let Some(truth) = &setup.dataset.sigma_true else { return Ok(None) };
    let reg = setup.regularization(cfg, scheme)?;
    let misfit = setup.misfit()?;
    Ok(Some(RipgnProblem { model: &misfit, regularization: &reg }.objective(truth)?))
}

/// Writes a dataset file for `cfg` and returns it.
pub fn simulate_to_file(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    let ds = simulate(cfg)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(crate::error::io_err(parent))?;
    }
    io::write_file(path, io::dataset_to_text(&ds))?;
    Ok(ds)
}
