use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pmorkit_core::config::{ExperimentConfig, SweepRange};
use pmorkit_core::interp::InterpMethod;
use pmorkit_core::inverse::{predicted_speedup, speedup_report, GradientSource, LmTrace};
use pmorkit_core::io::{
    displacement_matrix, f64_list, lm_trace_csv, numeric_table_csv, parse_trajectory_csv, read_matrix, sweep_csv,
    trajectory_csv, trajectory_from_parts, write_matrix, write_meta, SweepRow,
};
use pmorkit_core::linalg::{left_singular, numerical_rank};
use pmorkit_core::metrics::{eps_inf_inf, ScalarOutputs};
use pmorkit_core::params::ParameterSet;
use pmorkit_core::pod::{pod_basis, ric, select_order, SnapshotMatrix};
use pmorkit_core::study::{calibrate, error_vs_order, sweep_point, Calibration, Setup};
use pmorkit_core::{Error, Result, Trajectory};
use rayon::prelude::*;
use serde_json::json;

use crate::library;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Gradients {
    Prom,
    Fom,
    Both,
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// `name=value` pairs as a parameter set at the given physical values.
fn parse_sets(sets: &[String]) -> Result<Option<ParameterSet<f64>>> {
    if sets.is_empty() {
        return Ok(None);
    }
    let mut names = Vec::new();
    let mut values = Vec::new();
    for s in sets {
        let (name, value) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("--set expects NAME=VALUE, got '{s}'")))?;
        names.push(name.trim().to_string());
        values.push(
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("--set {name}: '{value}' is not a number")))?,
        );
    }
    ParameterSet::new(names, values).map(Some)
}

fn setup_with(cfg: &ExperimentConfig, sets: &[String]) -> Result<Setup> {
    let mut setup = Setup::from_scenario(&cfg.scenario)?;
    if let Some(mu) = parse_sets(sets)? {
        setup.model = setup.model_at(&mu)?;
    }
    Ok(setup)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_run(dir: &Path, traj: &Trajectory, outputs: &ScalarOutputs, extra: serde_json::Value, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(traj))?;
    write_matrix(&dir.join("displacements.mat"), &displacement_matrix(traj))?;
    let mut summary = json!({
        "seed": seed,
        "outputs": outputs,
        "steps": traj.len() - 1,
        "newton_iterations": traj.newton_iters.iter().sum::<usize>(),
        "wall_time_s": traj.wall_time,
    });
    if let (Some(map), serde_json::Value::Object(more)) = (summary.as_object_mut(), extra) {
        map.extend(more);
    }
    write_json(&dir.join("summary.json"), &summary)
}

pub fn fom_run(cfg: &ExperimentConfig, sets: &[String], out: &Path) -> Result<()> {
    let setup = setup_with(cfg, sets)?;
    let traj = setup.fom(&identity(&setup)?)?;
    let outputs = ScalarOutputs::from_trajectory(&traj, &setup.model.chamber.mesh)?;
    write_run(out, &traj, &outputs, json!({}), cfg.seed)?;
    println!(
        "fom: {} steps, EF {:.4}, p_v max {:.3} kPa -> {}",
        traj.len() - 1,
        outputs.ef,
        outputs.p_v_max,
        out.display()
    );
    Ok(())
}

/// Parameter set that leaves the model untouched.
fn identity(setup: &Setup) -> Result<ParameterSet<f64>> {
    ParameterSet::scalar("sigma", setup.model.activation.sigma, setup.model.activation.sigma)
}

pub fn pod_build(cfg: &ExperimentConfig, snapshots: &Path, q: Option<usize>, eps_pod: Option<f64>, out: &Path) -> Result<()> {
    let d = SnapshotMatrix::new(read_matrix(snapshots)?, None, cfg.scenario.integrator.dt)?;
    let (_, sv) = left_singular(&d.data, 1)?;
    let q = match eps_pod.or(cfg.pod.eps_pod) {
        Some(eps) => select_order(&sv, eps)?,
        None => q.unwrap_or(cfg.pod.q),
    };
    let basis = pod_basis(&d, q)?;
    fs::create_dir_all(out)?;
    write_matrix(&out.join("basis.mat"), &basis.v)?;
    let mut meta = BTreeMap::new();
    meta.insert("q".to_string(), q.to_string());
    meta.insert("n".to_string(), basis.n().to_string());
    meta.insert("snapshots".to_string(), d.ncols().to_string());
    meta.insert("rank".to_string(), numerical_rank(&sv, d.nrows(), d.ncols()).to_string());
    meta.insert("ric".to_string(), format!("{:.17e}", ric(&sv, q)?));
    meta.insert("singular_values".to_string(), f64_list(&sv));
    write_meta(&out.join("basis.meta"), &meta)?;
    println!("pod: q = {q}, RIC = {:.10} -> {}", ric(&sv, q)?, out.display());
    Ok(())
}

fn read_run(dir: &Path) -> Result<Trajectory> {
    let table = parse_trajectory_csv(&fs::read_to_string(dir.join("trajectory.csv"))?)?;
    trajectory_from_parts(table, &read_matrix(&dir.join("displacements.mat"))?)
}

pub fn rom_run(cfg: &ExperimentConfig, basis: &Path, sets: &[String], reference: Option<&Path>, out: &Path) -> Result<()> {
    let setup = setup_with(cfg, sets)?;
    let v = read_matrix(basis)?;
    let traj = setup.rom(&identity(&setup)?, &v)?;
    let outputs = ScalarOutputs::from_trajectory(&traj, &setup.model.chamber.mesh)?;
    let eps = reference.map(|r| eps_inf_inf(&traj, &read_run(r)?)).transpose()?;
    write_run(out, &traj, &outputs, json!({ "q": v.ncols(), "eps_inf_inf": eps }), cfg.seed)?;
    match eps {
        Some(e) => println!("rom: q = {}, eps_inf_inf {e:.3e} mm -> {}", v.ncols(), out.display()),
        None => println!("rom: q = {}, EF {:.4} -> {}", v.ncols(), outputs.ef, out.display()),
    }
    Ok(())
}

pub fn pmor_build(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let setup = Setup::from_scenario(&cfg.scenario)?;
    let samples = cfg.pmor.sample_parameters()?;
    let (lib, _) = setup.library(&samples, cfg.pod.q, cfg.pod.stride)?;
    library::save(out, cfg, &lib)?;
    println!("pmor: {} samples, q = {} -> {}", lib.len(), lib.q(), out.display());
    Ok(())
}

/// Sweep rows at every normalized query of `range`, queries run concurrently.
fn sweep_rows(
    setup: &Setup,
    lib: &pmorkit_core::interp::SampleLibrary<f64>,
    range: SweepRange,
    methods: &[InterpMethod],
    include_fom: bool,
) -> Result<Vec<SweepRow>> {
    let template = lib.samples()[0].mu.clone();
    if template.len() != 1 {
        return Err(Error::InvalidConfig("sweeps need a one-parameter library".into()));
    }
    let points = range
        .points()
        .into_par_iter()
        .map(|x| {
            let mu = template.with_values(vec![x]);
            sweep_point(setup, lib, &mu, methods, &setup.fom(&mu)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for p in points {
        for w in &p.warnings {
            eprintln!("warning: {w}");
        }
        rows.extend(p.rows.into_iter().skip(usize::from(!include_fom)));
    }
    Ok(rows)
}

pub fn pmor_sweep(
    cfg: Option<&ExperimentConfig>,
    dir: &Path,
    methods: &[InterpMethod],
    range: Option<SweepRange>,
    include_fom: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (lib_cfg, lib) = library::load(dir)?;
    let cfg = cfg.unwrap_or(&lib_cfg);
    let setup = Setup::from_scenario(&cfg.scenario)?;
    let methods = if methods.is_empty() { &cfg.pmor.methods[..] } else { methods };
    let rows = sweep_rows(&setup, &lib, range.unwrap_or(cfg.pmor.range), methods, include_fom)?;
    let text = sweep_csv(&rows);
    match out {
        Some(p) => {
            fs::write(p, text)?;
            eprintln!("pmor: {} rows -> {}", rows.len(), p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn calibration_summary(cfg: &ExperimentConfig, c: &Calibration) -> serde_json::Value {
    let t = &c.trace;
    json!({
        "gradients": t.gradients.to_string(),
        "converged": t.converged,
        "stop_reason": t.stop_reason,
        "iterations": t.updates(),
        "first_below_s_rel": t.first_below(cfg.invana.lm.s_rel),
        "s_rel_final": t.s_rel(t.iterations.len() - 1),
        "names": t.names,
        "estimate": c.estimate.values,
        "estimate_physical": c.estimate.physical(),
        "truth": c.truth.values,
        "max_relative_error": c.max_relative_error(),
        "evaluation_time_s": t.evaluation_time(),
        "wall_time_s": t.wall_time,
    })
}

fn single_run_speedup(t: &LmTrace<f64>) -> (f64, f64) {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let alpha = mean(t.fom_times().collect()) / mean(t.prom_times().collect());
    (alpha, predicted_speedup(alpha, t.n_p(), 1.0))
}

pub fn invana_run(cfg: &ExperimentConfig, gradients: Gradients, out: &Path) -> Result<()> {
    let setup = Setup::from_scenario(&cfg.scenario)?;
    fs::create_dir_all(out)?;
    let sources: &[GradientSource] = match gradients {
        Gradients::Prom => &[GradientSource::Prom],
        Gradients::Fom => &[GradientSource::Fom],
        Gradients::Both => &[GradientSource::Fom, GradientSource::Prom],
    };
    let mut runs = Vec::new();
    for &src in sources {
        let c = calibrate(&setup, &cfg.invana, src)?;
        let name = if sources.len() == 1 {
            "lm_trace.csv".to_string()
        } else {
            format!("lm_trace_{src}.csv")
        };
        fs::write(out.join(name), lm_trace_csv(&c.trace))?;
        println!(
            "invana ({src}): {} iterations, S/S0 = {:.3e}, converged {}",
            c.trace.updates(),
            c.trace.s_rel(c.trace.iterations.len() - 1),
            c.trace.converged
        );
        runs.push(c);
    }
    let summary = match runs.as_slice() {
        [fom, prom] => {
            let r = speedup_report(&fom.trace, &prom.trace);
            json!({
                "seed": cfg.seed,
                "alpha": r.alpha,
                "beta": r.beta,
                "measured_speedup": r.measured,
                "converged": fom.trace.converged && prom.trace.converged,
                "iterations": { "fom": r.iterations_fom, "prom": r.iterations_prom },
                "fom": calibration_summary(cfg, fom),
                "prom": calibration_summary(cfg, prom),
            })
        }
        [c] => {
            let (alpha, beta) = match c.trace.gradients {
                GradientSource::Prom => single_run_speedup(&c.trace),
                GradientSource::Fom => (f64::NAN, f64::NAN),
            };
            let mut s = calibration_summary(cfg, c);
            s["seed"] = json!(cfg.seed);
            s["alpha"] = json!(alpha.is_finite().then_some(alpha));
            s["beta"] = json!(beta.is_finite().then_some(beta));
            s
        }
        _ => unreachable!("one or two gradient sources"),
    };
    write_json(&out.join("summary.json"), &summary)
}

/// Reduced orders 1, 2, 4, ... up to `max`.
fn orders_up_to(max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |q| Some(q * 2)).take_while(|q| *q <= max).collect()
}

pub fn report(cfg: &ExperimentConfig, out: &Path, with_invana: bool) -> Result<()> {
    fs::create_dir_all(out)?;
    let setup = Setup::from_scenario(&cfg.scenario)?;
    let samples = cfg.pmor.sample_parameters()?;
    let (lib, runs) = setup.library(&samples, cfg.pod.q, cfg.pod.stride)?;

    let d = runs[0].snapshot_matrix();
    let sv = &pod_basis(&lib.samples()[0].snapshots, 1)?.singular_values;
    let spectrum: Vec<Vec<f64>> = (0..sv.len())
        .map(|k| Ok(vec![(k + 1) as f64, sv[k], ric(sv, k + 1)?]))
        .collect::<Result<_>>()?;
    fs::write(out.join("pod_spectrum.csv"), numeric_table_csv(&["k", "singular_value", "ric"], &spectrum))?;

    let rank = numerical_rank(sv, d.nrows(), d.ncols());
    let errors: Vec<Vec<f64>> = error_vs_order(&setup, &samples[0], &runs[0], &d, &orders_up_to(rank))?
        .into_iter()
        .map(|(q, e)| vec![q as f64, e])
        .collect();
    fs::write(out.join("rom_error.csv"), numeric_table_csv(&["q", "eps_inf_inf"], &errors))?;

    let rows = sweep_rows(&setup, &lib, cfg.pmor.range, &cfg.pmor.methods, true)?;
    fs::write(out.join("sweep.csv"), sweep_csv(&rows))?;

    if with_invana {
        let c = calibrate(&setup, &cfg.invana, cfg.invana.lm.gradients)?;
        let t = &c.trace;
        let nan = f64::NAN;
        let iters: Vec<Vec<f64>> = (0..t.iterations.len())
            .map(|i| vec![i as f64, t.s_rel(i), t.grad_rel(i).unwrap_or(nan), t.iterations[i].lambda.unwrap_or(nan)])
            .collect();
        fs::write(out.join("lm_iterations.csv"), numeric_table_csv(&["iter", "S_rel", "grad_rel", "lambda"], &iters))?;
        let mut header = vec!["iter"];
        header.extend(t.names.iter().map(String::as_str));
        let params: Vec<Vec<f64>> = t
            .iterations
            .iter()
            .enumerate()
            .map(|(i, it)| std::iter::once(i as f64).chain(it.mu.iter().copied()).collect())
            .collect();
        fs::write(out.join("lm_parameters.csv"), numeric_table_csv(&header, &params))?;
    }
    println!("report -> {}", out.display());
    Ok(())
}
