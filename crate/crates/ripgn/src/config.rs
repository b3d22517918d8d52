//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{io_err, HarnessError, Result};
use crate::phantom::{Inclusion, Phantom, DESK_BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Smooth,
    Tv,
    SmoothedTv,
}

impl Scheme {
    pub fn key(self) -> &'static str {
        match self {
            Scheme::Smooth => "smooth",
            Scheme::Tv => "tv",
            Scheme::SmoothedTv => "smoothed_tv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Ripgn,
    /// Plain Gauss–Newton: `w = 1`, `β = 0`.
    Gn,
    Newton,
    NlPdps,
}

impl SolverKind {
    pub fn key(self) -> &'static str {
        match self {
            SolverKind::Ripgn => "ripgn",
            SolverKind::Gn => "gn",
            SolverKind::Newton => "newton",
            SolverKind::NlPdps => "nlpdps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaDiag {
    /// `1/(noise_rel · rms(I^m))`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub solver: SolverKind,
    pub w: f64,
    pub beta: f64,
    pub t: f64,
    pub delta: f64,
    pub lambda: f64,
    pub inner_iters: usize,
    pub max_outer: usize,
    /// Residual inner stop `‖e‖ ≤ ρ‖x̃ − z‖`; fixed iteration count when unset.
    pub rho: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub prior_a: f64,
    pub prior_b: f64,
    pub la_diag: LaDiag,
    /// Barrier thresholds and box bounds; `None` takes the scheme default.
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub l_min_scale: f64,
    pub l_max_scale: f64,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub noise_rel: f64,
    pub seed: u64,
    pub radius: f64,
    pub electrodes: usize,
    /// Electrode arc length in metres.
    pub electrode_width: f64,
    pub inv_h: f64,
    pub sim_h: f64,
    pub inversion_mesh: Option<PathBuf>,
    pub simulation_mesh: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub background: f64,
    pub inclusions: Vec<Inclusion>,
    pub out_dir: PathBuf,
    /// Write wall times into trace files; off keeps traces byte-reproducible.
    pub trace_timing: bool,
    pub newton_max_iters: usize,
    /// NL-PDPS iteration budget as a multiple of `inner_iters`.
    pub nlpdps_factor: usize,
    pub sweep_w: Vec<f64>,
    pub sweep_solvers: Vec<SolverKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let desk = Phantom::desk();
        Self {
            scheme: Scheme::Tv,
            solver: SolverKind::Ripgn,
            w: 0.75,
            beta: 1e-10,
            t: 1e-6,
            delta: 0.01,
            lambda: 1.0,
            inner_iters: 6000,
            max_outer: 60,
            rho: None,
            alpha: 2e3,
            gamma: 1e-11,
            prior_a: 1e-4,
            prior_b: 5e-5,
            la_diag: LaDiag::Auto,
            sigma_min: None,
            sigma_max: None,
            l_min_scale: 1e2,
            l_max_scale: 1e2,
            v_min: None,
            v_max: None,
            noise_rel: 0.005,
            seed: 1,
            radius: 0.12,
            electrodes: 16,
            electrode_width: 0.025,
            inv_h: 0.0105,
            sim_h: 0.005,
            inversion_mesh: None,
            simulation_mesh: None,
            dataset: None,
            background: DESK_BACKGROUND,
            inclusions: desk.inclusions,
            out_dir: PathBuf::from("out"),
            trace_timing: false,
            newton_max_iters: 100,
            nlpdps_factor: 20,
            sweep_w: vec![0.25, 0.5, 0.75, 1.0],
            sweep_solvers: vec![SolverKind::Ripgn],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

/// `auto` selects the scheme default.
fn parse_auto(key: &str, value: &str) -> Result<Option<f64>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_solver(value: &str) -> Result<SolverKind, String> {
    match value {
        "ripgn" => Ok(SolverKind::Ripgn),
        "gn" => Ok(SolverKind::Gn),
        "newton" => Ok(SolverKind::Newton),
        "nlpdps" => Ok(SolverKind::NlPdps),
        _ => Err(format!("unknown solver `{value}`")),
    }
}

fn parse_inclusions(value: &str) -> Result<Vec<Inclusion>, String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let v: Vec<f64> = item.split_whitespace().map(|x| parse_num("inclusions", x)).collect::<Result<_, _>>()?;
            match v[..] {
                [x, y, radius, conductivity] => Ok(Inclusion { center: [x, y], radius, conductivity }),
                _ => Err(format!("inclusion `{item}` needs `x y radius conductivity`")),
            }
        })
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "scheme" => {
                self.scheme = match v {
                    "smooth" => Scheme::Smooth,
                    "tv" => Scheme::Tv,
                    "smoothed_tv" => Scheme::SmoothedTv,
                    _ => return Err(format!("unknown scheme `{v}`")),
                }
            }
            "solver" => self.solver = parse_solver(v)?,
            "w" => self.w = parse_num("w", v)?,
            "beta" => self.beta = parse_num("beta", v)?,
            "t" => self.t = parse_num("t", v)?,
            "delta" => self.delta = parse_num("delta", v)?,
            "lambda" => self.lambda = parse_num("lambda", v)?,
            "inner_iters" => self.inner_iters = parse_num("inner_iters", v)?,
            "max_outer" => self.max_outer = parse_num("max_outer", v)?,
            "rho" => self.rho = if v == "none" { None } else { Some(parse_num("rho", v)?) },
            "alpha" => self.alpha = parse_num("alpha", v)?,
            "gamma" => self.gamma = parse_num("gamma", v)?,
            "prior_a" => self.prior_a = parse_num("prior_a", v)?,
            "prior_b" => self.prior_b = parse_num("prior_b", v)?,
            "la_diag" => self.la_diag = if v == "auto" { LaDiag::Auto } else { LaDiag::Fixed(parse_num("la_diag", v)?) },
            "sigma_min" => self.sigma_min = parse_auto("sigma_min", v)?,
            "sigma_max" => self.sigma_max = parse_auto("sigma_max", v)?,
            "l_min_scale" => self.l_min_scale = parse_num("l_min_scale", v)?,
            "l_max_scale" => self.l_max_scale = parse_num("l_max_scale", v)?,
            "v_min" => self.v_min = parse_auto("v_min", v)?,
            "v_max" => self.v_max = parse_auto("v_max", v)?,
            "noise_rel" => self.noise_rel = parse_num("noise_rel", v)?,
            "seed" => self.seed = parse_num("seed", v)?,
            "radius" => self.radius = parse_num("radius", v)?,
            "electrodes" => self.electrodes = parse_num("electrodes", v)?,
            "electrode_width" => self.electrode_width = parse_num("electrode_width", v)?,
            "inv_h" => self.inv_h = parse_num("inv_h", v)?,
            "sim_h" => self.sim_h = parse_num("sim_h", v)?,
            "inversion_mesh" => self.inversion_mesh = Some(PathBuf::from(v)),
            "simulation_mesh" => self.simulation_mesh = Some(PathBuf::from(v)),
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "background" => self.background = parse_num("background", v)?,
            "inclusions" => self.inclusions = parse_inclusions(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "trace_timing" => self.trace_timing = parse_num("trace_timing", v)?,
            "newton_max_iters" => self.newton_max_iters = parse_num("newton_max_iters", v)?,
            "nlpdps_factor" => self.nlpdps_factor = parse_num("nlpdps_factor", v)?,
            "sweep_w" => {
                self.sweep_w = v.split(',').map(|x| parse_num("sweep_w", x.trim())).collect::<Result<_, _>>()?;
            }
            "sweep_solvers" => {
                self.sweep_solvers = v.split(',').map(|x| parse_solver(x.trim())).collect::<Result<_, _>>()?;
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| HarnessError::Parse { origin: origin.to_string(), line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| parse_err("expected `key = value`".into()))?;
            config.set(key, value).map_err(parse_err)?;
        }
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.inversion_mesh, &mut config.simulation_mesh, &mut config.dataset].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn phantom(&self) -> ripgn_core::Result<Phantom> {
        crate::phantom::make_phantom(self.background, self.inclusions.clone())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scheme", self.scheme.key().into());
        kv("solver", self.solver.key().into());
        kv("w", self.w.to_string());
        kv("beta", self.beta.to_string());
        kv("t", self.t.to_string());
        kv("delta", self.delta.to_string());
        kv("lambda", self.lambda.to_string());
        kv("inner_iters", self.inner_iters.to_string());
        kv("max_outer", self.max_outer.to_string());
        kv("rho", self.rho.map_or("none".into(), |r| r.to_string()));
        kv("alpha", self.alpha.to_string());
        kv("gamma", self.gamma.to_string());
        kv("prior_a", self.prior_a.to_string());
        kv("prior_b", self.prior_b.to_string());
        kv("la_diag", match self.la_diag {
            LaDiag::Auto => "auto".into(),
            LaDiag::Fixed(v) => v.to_string(),
        });
        kv("sigma_min", self.sigma_min.map_or("auto".into(), |v| v.to_string()));
        kv("sigma_max", self.sigma_max.map_or("auto".into(), |v| v.to_string()));
        kv("l_min_scale", self.l_min_scale.to_string());
        kv("l_max_scale", self.l_max_scale.to_string());
        kv("v_min", self.v_min.map_or("auto".into(), |v| v.to_string()));
        kv("v_max", self.v_max.map_or("auto".into(), |v| v.to_string()));
        kv("noise_rel", self.noise_rel.to_string());
        kv("seed", self.seed.to_string());
        kv("radius", self.radius.to_string());
        kv("electrodes", self.electrodes.to_string());
        kv("electrode_width", self.electrode_width.to_string());
        kv("inv_h", self.inv_h.to_string());
        kv("sim_h", self.sim_h.to_string());
        for (k, p) in [("inversion_mesh", &self.inversion_mesh), ("simulation_mesh", &self.simulation_mesh), ("dataset", &self.dataset)] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        kv("background", self.background.to_string());
        let inc: Vec<String> =
            self.inclusions.iter().map(|i| format!("{} {} {} {}", i.center[0], i.center[1], i.radius, i.conductivity)).collect();
        kv("inclusions", inc.join("; "));
        kv("out_dir", self.out_dir.display().to_string());
        kv("trace_timing", self.trace_timing.to_string());
        kv("newton_max_iters", self.newton_max_iters.to_string());
        kv("nlpdps_factor", self.nlpdps_factor.to_string());
        kv("sweep_w", join(&self.sweep_w));
        kv("sweep_solvers", self.sweep_solvers.iter().map(|s| s.key()).collect::<Vec<_>>().join(","));
        s
    }
}
