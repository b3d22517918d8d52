use std::fs;
use std::process::Command;
use std::time::Instant;

use ripgn::experiment::{self, Setup, EXIT_ERROR};
use ripgn::{io, HarnessError, RunConfig, SolverKind};

fn tiny(out: &std::path::Path) -> RunConfig {
    RunConfig {
        electrodes: 8,
        inv_h: 0.014,
        sim_h: 0.008,
        max_outer: 5,
        inner_iters: 200,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn tiny_case_runs_quickly_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let start = Instant::now();
    let report = experiment::run_case(&cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert!(report.summary.get("inversion_nodes").unwrap().parse::<usize>().unwrap() <= 300);
    assert!(report.outcome.iterations() <= 5);
    for f in ["reconstruction.csv", "reconstruction.pgm", "trace.txt", "summary.txt", "config.txt"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let summary = io::Summary::parse(&fs::read_to_string(dir.path().join("summary.txt")).unwrap());
    let j0: f64 = summary.get("initial_objective").unwrap().parse().unwrap();
    let j: f64 = summary.get("final_objective").unwrap().parse().unwrap();
    assert!(j < j0);
    assert!(summary.get("relative_error_percent").is_some());
}

#[test]
fn identical_seeds_give_identical_traces() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    experiment::run_case(&tiny(a.path())).unwrap();
    experiment::run_case(&tiny(b.path())).unwrap();
    let ta = fs::read(a.path().join("trace.txt")).unwrap();
    let tb = fs::read(b.path().join("trace.txt")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn unrelaxed_gauss_newton_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { solver: SolverKind::Gn, out_dir: dir.path().to_path_buf(), ..RunConfig::default() };
    let report = experiment::run_case(&cfg).unwrap();
    let s = &report.summary;
    assert_eq!(s.get("w"), Some("1"));
    let stop = s.get("stop").unwrap();
    assert!(s.get("diverged") == Some("true") || stop == "stagnation", "stop = {stop}");
}

#[test]
fn inverse_crime_is_refused() {
    let cfg = RunConfig { electrodes: 8, inv_h: 0.014, sim_h: 0.014, ..RunConfig::default() };
    assert!(experiment::simulate(&cfg).is_err());
    // A data file claiming the inversion mesh as its simulation mesh.
    let cfg = RunConfig { sim_h: 0.008, ..cfg };
    let mut data = experiment::simulate(&cfg).unwrap();
    data.simulation_nodes = data.inversion_mesh.n_nodes();
    match Setup::new(data, &cfg) {
        Err(HarnessError::Config(msg)) => assert!(msg.contains("inverse crime")),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("accepted data simulated on the inversion mesh"),
    }
}

#[test]
fn dataset_file_round_trips_through_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.txt");
    let cfg = tiny(dir.path());
    let written = experiment::simulate_to_file(&cfg, &path).unwrap();
    let read = io::read_dataset(&path).unwrap();
    assert_eq!(written.measurements, read.measurements);
    let from_file = RunConfig { dataset: Some(path), out_dir: dir.path().join("file"), ..cfg.clone() };
    let direct = RunConfig { out_dir: dir.path().join("direct"), ..cfg };
    let a = experiment::run_case(&from_file).unwrap();
    let b = experiment::run_case(&direct).unwrap();
    assert_eq!(a.outcome.trace.objectives(), b.outcome.trace.objectives());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ripgn")).args(args).output().unwrap()
}

#[test]
fn cli_reports_missing_config_file() {
    let out = cli(&["reconstruct", "-c", "/nonexistent/run.cfg"]);
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/run.cfg"), "{err}");
}

#[test]
fn cli_rejects_unknown_scheme() {
    let out = cli(&["reconstruct", "-s", "scheme=wavelet"]);
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scheme"), "{err}");
}

#[test]
fn cli_rejects_malformed_config_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "scheme = tv\nthis line has no equals sign\n").unwrap();
    let out = cli(&["reconstruct", "-c", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));
}
