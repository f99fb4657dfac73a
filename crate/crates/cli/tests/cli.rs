use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pmorkit_core::config::ExperimentConfig;
use pmorkit_core::io::{parse_lm_trace_csv, parse_numeric_table, parse_sweep_csv, parse_trajectory_csv, read_matrix, read_meta};
use tempfile::TempDir;

fn pmorkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmorkit"))
        .args(args)
        .env("PMORKIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pmorkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small, fast experiment: 16 nodes, library over normalized 0.8..1.2, two LM iterations.
fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.mesh.node_count = 16;
    cfg.scenario.mesh.marked_count = 3;
    cfg.pod.q = 6;
    cfg.pod.stride = 4;
    cfg.pmor.reference = 350.0;
    cfg.pmor.samples = vec![280.0, 420.0];
    cfg.pmor.range = "0.8:1.2:3".parse().unwrap();
    cfg.invana.lm.max_iter = 2;
    cfg.invana.lm.q = 6;
    let path = dir.join("c.json");
    cfg.save(&path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let help = pmorkit(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("pmor"));

    let unknown = pmorkit(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    assert_eq!(pmorkit(&["pod", "build", "--bogus"]).status.code(), Some(1));
    assert_eq!(pmorkit(&["--config", "/nonexistent/c.json", "fom", "run"]).status.code(), Some(1));
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_pmorkit"))
        .args(["pod", "build", "--snapshots", "x.mat"])
        .env("PMORKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fom_pod_rom_pipeline() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let fom = tmp.path().join("fom");
    ok(&["--config", s(&cfg), "fom", "run", "--out", s(&fom), "--set", "sigma=300"]);
    let table = parse_trajectory_csv(&fs::read_to_string(fom.join("trajectory.csv")).unwrap()).unwrap();
    assert_eq!(table.times.len(), 801);
    let sum = summary(&fom.join("summary.json"));
    assert!(sum["outputs"]["ef"].as_f64().unwrap() > 0.0);

    let pod = tmp.path().join("pod");
    let snapshots = fom.join("displacements.mat");
    ok(&["--config", s(&cfg), "pod", "build", "--snapshots", s(&snapshots), "--q", "30", "--out", s(&pod)]);
    assert_eq!(read_matrix(&pod.join("basis.mat")).unwrap().shape(), (32, 30));
    let meta = read_meta(&pod.join("basis.meta")).unwrap();
    assert_eq!(meta["q"], "30");

    let rom = tmp.path().join("rom");
    let basis = pod.join("basis.mat");
    ok(&["--config", s(&cfg), "rom", "run", "--basis", s(&basis), "--set", "sigma=300", "--reference", s(&fom), "--out", s(&rom)]);
    let eps = summary(&rom.join("summary.json"))["eps_inf_inf"].as_f64().unwrap();
    assert!(eps < 1e-3, "{eps}");
}

#[test]
fn pod_order_from_energy() {
    let tmp = TempDir::new().unwrap();
    let mat = tmp.path().join("s.mat");
    fs::write(&mat, "3 2\n1 0\n0 1e-3\n0 0\n").unwrap();
    let out = tmp.path().join("pod");
    ok(&["pod", "build", "--snapshots", s(&mat), "--eps-pod", "1e-3", "--out", s(&out)]);
    assert_eq!(read_meta(&out.join("basis.meta")).unwrap()["q"], "1");
}

#[test]
fn numerical_failure_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let mat = tmp.path().join("zero.mat");
    fs::write(&mat, "2 2\n0 0\n0 0\n").unwrap();
    let out = pmorkit(&["pod", "build", "--snapshots", s(&mat), "--eps-pod", "0.01", "--out", s(&tmp.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn pmor_sweep_emits_one_row_per_query() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let lib = tmp.path().join("lib");
    ok(&["--config", s(&cfg), "pmor", "build", "--out", s(&lib)]);
    let csv = tmp.path().join("sweep.csv");
    ok(&["pmor", "sweep", "--library", s(&lib), "--method", "cos", "--range", "0.8:1.2:9", "--out", s(&csv)]);
    let rows = parse_sweep_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.method == "cos" && r.eps_inf_inf.is_finite()));
    assert!((rows[0].mu - 0.8).abs() < 1e-12 && (rows[8].mu - 1.2).abs() < 1e-12);
    // The endpoints are the library samples.
    assert!(rows[0].eps_inf_inf < rows[4].eps_inf_inf);

    let out = ok(&["pmor", "sweep", "--library", s(&lib), "--method", "cob,grassmann", "--range", "1.0:1.0:1", "--include-fom"]);
    let rows = parse_sweep_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["fom", "cob", "grassmann"]);
}

#[test]
fn invana_traces_for_both_gradient_sources() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    for g in ["prom", "fom"] {
        let out = tmp.path().join(g);
        ok(&["--config", s(&cfg), "--seed", "3", "invana", "run", "--gradients", g, "--out", s(&out)]);
        let rows = parse_lm_trace_csv(&fs::read_to_string(out.join("lm_trace.csv")).unwrap()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].s_rel, 1.0);
        let sum = summary(&out.join("summary.json"));
        assert_eq!(sum["seed"], 3);
        assert_eq!(sum["iterations"], 2);
        assert!(sum["converged"].is_boolean());
        assert_eq!(sum["alpha"].is_number(), g == "prom");
    }
}

#[test]
fn report_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--config", s(&cfg), "report", "--out", s(&a)]);
    ok(&["--config", s(&cfg), "report", "--out", s(&b)]);
    let files = ["pod_spectrum.csv", "rom_error.csv", "sweep.csv", "lm_iterations.csv", "lm_parameters.csv"];
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (header, rows) = parse_numeric_table(&fs::read_to_string(a.join("rom_error.csv")).unwrap()).unwrap();
    assert_eq!(header, ["q", "eps_inf_inf"]);
    assert!(rows.len() >= 4 && rows.last().unwrap()[1] < rows[0][1]);
    let (header, _) = parse_numeric_table(&fs::read_to_string(a.join("lm_parameters.csv")).unwrap()).unwrap();
    assert_eq!(header, ["iter", "sigma", "alpha_max", "alpha_min", "t_sys", "t_dias"]);
    let sweep = parse_sweep_csv(&fs::read_to_string(a.join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(sweep.len(), 3 * 5);
}
