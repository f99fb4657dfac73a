//! Levenberg-Marquardt parameter identification whose finite-difference
//! Jacobians come from reduced-order evaluations on interpolated bases.
//!
//! Each iteration runs the full-order model once at the current iterate (for
//! the objective and the convergence check) and stores its snapshots. Jacobian
//! columns are reduced-order runs whose basis is a distance-weighted
//! concatenation of the current snapshots with those of the closest earlier
//! iterate.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use cpu_time::ThreadTime;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::TimeIntegrator;
use crate::interp::weighted_snapshot_basis;
use crate::linalg::solve_dense;
use crate::params::{distance, ParameterSet};
use crate::pod::{pod_basis, BasisOrigin, ProjectionBasis, SnapshotMatrix};
use crate::rom::run_rom;
use crate::scalar::Real;
use crate::solver::{run_fom, CoupledModel, SolverTolerances, Trajectory};

/// Model output `f(mu)` at full and at reduced order.
pub trait ForwardModel<T: Real>: Sync {
    /// Full-order output and the snapshots of the run.
    fn full(&self, mu: &ParameterSet<T>) -> Result<(DVector<T>, SnapshotMatrix<T>)>;

    /// Reduced-order output with projection matrix `v`.
    fn reduced(&self, mu: &ParameterSet<T>, v: &DMatrix<T>) -> Result<DVector<T>>;
}

/// Cavity volume sampled at a fixed interval and divided by the reference volume.
#[derive(Debug, Clone)]
pub struct VolumeForward<T: Real> {
    pub model: CoupledModel<T>,
    pub integ: TimeIntegrator<T>,
    pub tol: SolverTolerances<T>,
    every: usize,
    /// Keep every `stride`-th step as a snapshot.
    pub snapshot_stride: usize,
}

impl<T: Real> VolumeForward<T> {
    pub fn new(model: CoupledModel<T>, integ: TimeIntegrator<T>, tol: SolverTolerances<T>, sample_interval: T) -> Result<Self> {
        integ.validate()?;
        let ratio = (sample_interval / integ.dt).as_f64();
        let every = ratio.round();
        if every < 1.0 || (ratio - every).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "sample interval {:e} must be a positive multiple of dt = {:e}",
                sample_interval.as_f64(),
                integ.dt.as_f64()
            )));
        }
        Ok(VolumeForward {
            model,
            integ,
            tol,
            every: every as usize,
            snapshot_stride: 1,
        })
    }

    /// Number of measurement samples `m`.
    pub fn output_len(&self) -> usize {
        self.integ.step_count() / self.every
    }

    pub fn output(&self, traj: &Trajectory<T>) -> DVector<T> {
        let v0 = traj.volumes[0];
        let idx: Vec<usize> = (self.every..traj.volumes.len()).step_by(self.every).collect();
        DVector::from_iterator(idx.len(), idx.iter().map(|&k| traj.volumes[k] / v0))
    }

    pub fn model_at(&self, mu: &ParameterSet<T>) -> Result<CoupledModel<T>> {
        let mut m = self.model.clone();
        mu.apply(&mut m)?;
        Ok(m)
    }
}

impl<T: Real> ForwardModel<T> for VolumeForward<T> {
    fn full(&self, mu: &ParameterSet<T>) -> Result<(DVector<T>, SnapshotMatrix<T>)> {
        let traj = run_fom(&self.model_at(mu)?, &self.integ, &self.tol)?;
        let snaps = SnapshotMatrix::from_trajectory(&traj, Some(mu.clone()), self.integ.dt, self.snapshot_stride)?;
        Ok((self.output(&traj), snaps))
    }

    fn reduced(&self, mu: &ParameterSet<T>, v: &DMatrix<T>) -> Result<DVector<T>> {
        let traj = run_rom(&self.model_at(mu)?, v, &self.integ, &self.tol)?;
        Ok(self.output(&traj))
    }
}

fn forward_failed<T: Real>(mu: &ParameterSet<T>, e: Error) -> Error {
    Error::ForwardFailed {
        mu: mu.values.iter().map(|x| x.as_f64()).collect(),
        source: Box::new(e),
    }
}

/// `r = y - f` and `S = |r|^2 / 2`.
pub fn residual<T: Real>(y: &DVector<T>, f: &DVector<T>) -> Result<(T, DVector<T>)> {
    if y.len() != f.len() {
        return Err(Error::InvalidInput(format!("{} measurements but {} outputs", y.len(), f.len())));
    }
    let r = y - f;
    Ok((r.norm_squared() * T::lit(0.5), r))
}

/// Result of `f` and the CPU time (s) the calling thread spent in it.
///
/// Evaluations are timed in thread CPU time so that concurrent columns and
/// unrelated load on the machine do not inflate each other's cost.
fn cpu_timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = ThreadTime::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}

/// One full-order objective evaluation.
#[derive(Debug, Clone)]
pub struct FullEvaluation<T: Real> {
    pub s: T,
    pub r: DVector<T>,
    pub output: DVector<T>,
    pub snapshots: SnapshotMatrix<T>,
    /// CPU time of the run.
    pub seconds: f64,
}

/// `S(mu)` from a full-order run; failures carry `mu`.
pub fn objective<T: Real, F: ForwardModel<T>>(mu: &ParameterSet<T>, y: &DVector<T>, forward: &F) -> Result<FullEvaluation<T>> {
    let (result, seconds) = cpu_timed(|| forward.full(mu));
    let (output, snapshots) = result.map_err(|e| forward_failed(mu, e))?;
    let (s, r) = residual(y, &output)?;
    Ok(FullEvaluation {
        s,
        r,
        output,
        snapshots,
        seconds,
    })
}

/// Source of the Jacobian columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientSource {
    Prom,
    Fom,
}

impl fmt::Display for GradientSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientSource::Prom => "prom",
            GradientSource::Fom => "fom",
        })
    }
}

impl FromStr for GradientSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prom" => Ok(GradientSource::Prom),
            "fom" => Ok(GradientSource::Fom),
            other => Err(Error::InvalidConfig(format!("unknown gradient source '{other}' (expected prom or fom)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct LmConfig<T> {
    pub lambda0: T,
    /// Finite-difference step in normalized parameter space.
    pub fd_step: T,
    pub tol_grad: T,
    pub tol_inc: T,
    /// Stop once `S / S0` drops below this.
    pub s_rel: T,
    pub max_iter: usize,
    /// Reduced order of the gradient bases.
    pub q: usize,
    pub gradients: GradientSource,
    /// Replace failed reduced-order columns by full-order ones.
    pub fom_fallback: bool,
}

impl<T: Real> Default for LmConfig<T> {
    fn default() -> Self {
        LmConfig {
            lambda0: T::lit(0.1),
            fd_step: T::lit(0.01),
            tol_grad: T::lit(1e-8),
            tol_inc: T::lit(1e-8),
            s_rel: T::lit(1e-5),
            max_iter: 50,
            q: 30,
            gradients: GradientSource::Prom,
            fom_fallback: true,
        }
    }
}

impl<T: Real> LmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if self.lambda0 < z || self.fd_step <= z || self.tol_grad < z || self.tol_inc < z || self.s_rel < z || self.q == 0 {
            return Err(Error::InvalidConfig(format!(
                "LM settings need lambda0 >= 0, fd_step > 0, nonnegative tolerances and q >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Full-order snapshots of every LM iterate, in iteration order.
#[derive(Debug, Clone)]
pub struct SnapshotStore<T: Real> {
    entries: Vec<(Vec<T>, SnapshotMatrix<T>)>,
}

impl<T: Real> Default for SnapshotStore<T> {
    fn default() -> Self {
        SnapshotStore { entries: Vec::new() }
    }
}

impl<T: Real> SnapshotStore<T> {
    pub fn push(&mut self, mu: Vec<T>, d: SnapshotMatrix<T>) {
        self.entries.push((mu, d));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Vec<T>, SnapshotMatrix<T>)] {
        &self.entries
    }
}

/// Two-point inverse distance weights `(w_1, w_2)`, `w_1 = (1/d_1)/(1/d_1 + 1/d_2)`.
pub fn enrichment_weights<T: Real>(d1: T, d2: T) -> Result<(T, T)> {
    let z = T::zero();
    match (d1 == z, d2 == z) {
        (true, true) => Err(Error::CoincidentPoints),
        (true, false) => Ok((T::one(), z)),
        (false, true) => Ok((z, T::one())),
        (false, false) => {
            let w1 = (T::one() / d1) / (T::one() / d1 + T::one() / d2);
            Ok((w1, T::one() - w1))
        }
    }
}

/// Basis for a reduced evaluation at `mu_eval`: POD of the only stored run, or
/// CoS of the latest run and the earlier run closest to `mu_eval`.
pub fn enrichment_basis<T: Real>(mu_eval: &[T], store: &SnapshotStore<T>, q: usize) -> Result<ProjectionBasis<T>> {
    let (latest, earlier) = store
        .entries
        .split_last()
        .ok_or_else(|| Error::InvalidInput("snapshot store is empty".into()))?;
    if earlier.is_empty() {
        return pod_basis(&latest.1, q);
    }
    let d1 = distance(mu_eval, &latest.0);
    let (k, d2) = earlier
        .iter()
        .enumerate()
        .map(|(j, (mu, _))| (j, distance(mu_eval, mu)))
        .fold((0, T::max_value().unwrap()), |best, cand| if cand.1 < best.1 { cand } else { best });
    let (w1, w2) = enrichment_weights(d1, d2)?;
    let (v, singular_values) = weighted_snapshot_basis(&[(&latest.1.data, w1), (&earlier[k].1.data, w2)], q)?;
    Ok(ProjectionBasis {
        v,
        singular_values,
        origin: BasisOrigin::Unknown,
        warnings: Vec::new(),
    })
}

/// Perturbation sign per coordinate: the direction whose perturbed value is
/// closer to the range spanned by `history`; ties go positive.
pub fn fd_signs<T: Real>(mu: &[T], history: &[Vec<T>], step: T) -> Vec<T> {
    (0..mu.len())
        .map(|p| {
            let (lo, hi) = history
                .iter()
                .map(|h| h[p])
                .fold((mu[p], mu[p]), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let gap = |x: T| {
                if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    T::zero()
                }
            };
            if gap(mu[p] - step) < gap(mu[p] + step) {
                -T::one()
            } else {
                T::one()
            }
        })
        .collect()
}

/// Finite-difference Jacobian `dr/dmu` with its cost breakdown.
#[derive(Debug, Clone)]
pub struct JacobianEvaluation<T: Real> {
    pub j: DMatrix<T>,
    /// CPU seconds per reduced evaluation, basis construction included.
    pub t_prom: Vec<f64>,
    /// CPU seconds per full-order evaluation spent on columns.
    pub t_fom: Vec<f64>,
    /// Columns computed at full order after a reduced failure.
    pub fallbacks: Vec<usize>,
}

enum Column<T: Real> {
    Reduced(DVector<T>, f64),
    Full(DVector<T>, f64),
}

/// One-sided differences around `mu`. `base_fom` is the stored full-order
/// output at `mu`; reduced columns difference against a reduced base run so
/// the projection error largely cancels.
pub fn fd_jacobian<T: Real, F: ForwardModel<T>>(
    mu: &ParameterSet<T>,
    base_fom: &DVector<T>,
    store: &SnapshotStore<T>,
    forward: &F,
    cfg: &LmConfig<T>,
) -> Result<JacobianEvaluation<T>> {
    let n_p = mu.len();
    let history: Vec<Vec<T>> = store.entries.iter().map(|(m, _)| m.clone()).collect();
    let signs = fd_signs(&mu.values, &history, cfg.fd_step);
    let perturbed = |p: usize| {
        let mut v = mu.values.clone();
        v[p] += signs[p] * cfg.fd_step;
        mu.with_values(v)
    };
    let reduced_at = |m: &ParameterSet<T>| -> Result<(DVector<T>, f64)> {
        let (f, t) = cpu_timed(|| forward.reduced(m, &enrichment_basis(&m.values, store, cfg.q)?.v));
        Ok((f?, t))
    };
    let full_at = |m: &ParameterSet<T>| -> Result<(DVector<T>, f64)> {
        let (f, t) = cpu_timed(|| forward.full(m));
        Ok((f.map_err(|e| forward_failed(m, e))?.0, t))
    };

    let mut out = JacobianEvaluation {
        j: DMatrix::zeros(base_fom.len(), n_p),
        t_prom: Vec::new(),
        t_fom: Vec::new(),
        fallbacks: Vec::new(),
    };
    let mut base_rom = None;
    if cfg.gradients == GradientSource::Prom {
        match reduced_at(mu) {
            Ok((f, t)) => {
                out.t_prom.push(t);
                base_rom = Some(f);
            }
            Err(e) if !cfg.fom_fallback => return Err(forward_failed(mu, e)),
            Err(_) => {}
        }
    }
    let columns: Vec<Result<Column<T>>> = (0..n_p)
        .into_par_iter()
        .map(|p| {
            let m = perturbed(p);
            if base_rom.is_some() {
                match reduced_at(&m) {
                    Ok((f, t)) => return Ok(Column::Reduced(f, t)),
                    Err(e) if !cfg.fom_fallback => {
                        return Err(Error::ColumnFailure {
                            column: p,
                            source: Box::new(e),
                        })
                    }
                    Err(_) => {}
                }
            }
            full_at(&m).map(|(f, t)| Column::Full(f, t))
        })
        .collect();
    for (p, col) in columns.into_iter().enumerate() {
        let (f, base) = match col? {
            Column::Reduced(f, t) => {
                out.t_prom.push(t);
                (f, base_rom.as_ref().unwrap())
            }
            Column::Full(f, t) => {
                out.t_fom.push(t);
                if cfg.gradients == GradientSource::Prom {
                    out.fallbacks.push(p);
                }
                (f, base_fom)
            }
        };
        if f.len() != base.len() {
            return Err(Error::InvalidInput(format!("column {p} output has length {}", f.len())));
        }
        let col = (f - base) * (-T::one() / (signs[p] * cfg.fd_step));
        out.j.set_column(p, &col);
    }
    Ok(out)
}

/// One LM iterate. Step fields are `None` on the final iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LmIteration<T> {
    pub iter: usize,
    pub mu: Vec<T>,
    /// Objective from the full-order run at `mu`.
    pub s: T,
    pub grad_norm: Option<T>,
    pub lambda: Option<T>,
    pub step_norm: Option<T>,
    /// Predicted change of the linearized objective, `g . dmu`.
    pub predicted_decrease: Option<T>,
    /// Full-order evaluation CPU times: the objective run first, then any columns.
    pub t_fom: Vec<f64>,
    pub t_prom: Vec<f64>,
    pub fallbacks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LmTrace<T: Real> {
    pub names: Vec<String>,
    pub initial_physical: Vec<T>,
    pub gradients: GradientSource,
    pub iterations: Vec<LmIteration<T>>,
    pub store: SnapshotStore<T>,
    pub converged: bool,
    pub stop_reason: String,
    pub wall_time: f64,
}

impl<T: Real> LmTrace<T> {
    pub fn n_p(&self) -> usize {
        self.names.len()
    }

    /// Number of parameter updates performed.
    pub fn updates(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    pub fn s0(&self) -> T {
        self.iterations[0].s
    }

    pub fn s_rel(&self, i: usize) -> T {
        let s0 = self.s0();
        if s0 == T::zero() {
            T::zero()
        } else {
            self.iterations[i].s / s0
        }
    }

    /// `|J^T r|` relative to the first iterate, `None` where no Jacobian was formed.
    pub fn grad_rel(&self, i: usize) -> Option<T> {
        let g0 = self.iterations[0].grad_norm?;
        let g = self.iterations[i].grad_norm?;
        Some(if g0 == T::zero() { T::zero() } else { g / g0 })
    }

    /// First iteration index whose `S / S0` is below `threshold`.
    pub fn first_below(&self, threshold: T) -> Option<usize> {
        (0..self.iterations.len()).find(|&i| self.s_rel(i) < threshold)
    }

    pub fn fom_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterations.iter().flat_map(|it| it.t_fom.iter().copied())
    }

    pub fn prom_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterations.iter().flat_map(|it| it.t_prom.iter().copied())
    }

    /// Serial cost of the run: the summed CPU time of all forward evaluations.
    pub fn evaluation_time(&self) -> f64 {
        self.fom_times().sum::<f64>() + self.prom_times().sum::<f64>()
    }

    pub fn best(&self) -> &LmIteration<T> {
        self.iterations
            .iter()
            .fold(&self.iterations[0], |b, it| if it.s < b.s { it } else { b })
    }
}

const MAX_DAMPING_RETRIES: usize = 5;

fn damped_step<T: Real>(jtj: &DMatrix<T>, g: &DVector<T>, lambda: T) -> Result<DVector<T>> {
    let mut a = jtj.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += lambda * jtj[(k, k)];
    }
    solve_dense(&a, &(-g))
}

/// Levenberg-Marquardt from `mu0` towards the measurements `y`.
///
/// The damping follows `lambda_i = lambda_{i-1} |g_i| / |g_{i-1}|` with
/// `g = J^T r`; every computed step is taken. Hitting `max_iter` returns the
/// best iterate with `converged = false`.
pub fn lm_run<T: Real, F: ForwardModel<T>>(
    mu0: &ParameterSet<T>,
    y: &DVector<T>,
    forward: &F,
    cfg: &LmConfig<T>,
) -> Result<(ParameterSet<T>, LmTrace<T>)> {
    cfg.validate()?;
    mu0.validate()?;
    let start = Instant::now();
    let mut trace = LmTrace {
        names: mu0.names.clone(),
        initial_physical: mu0.initial_physical.clone(),
        gradients: cfg.gradients,
        iterations: Vec::new(),
        store: SnapshotStore::default(),
        converged: false,
        stop_reason: String::new(),
        wall_time: 0.0,
    };
    let mut mu = mu0.clone();
    let mut eval = objective(&mu, y, forward)?;
    if y.len() < mu.len() {
        return Err(Error::InvalidInput(format!("{} measurements for {} parameters", y.len(), mu.len())));
    }
    trace.iterations.push(new_iteration(0, &mu, &eval));
    trace.store.push(mu.values.clone(), eval.snapshots.clone());

    let s0 = eval.s;
    let mut lambda = cfg.lambda0;
    let mut prev_grad: Option<T> = None;
    let mut last_step: Option<T> = None;
    for i in 0.. {
        if s0 == T::zero() || eval.s / s0 < cfg.s_rel {
            trace.converged = true;
            trace.stop_reason = format!("S/S0 below {:e}", cfg.s_rel.as_f64());
            break;
        }
        if i == cfg.max_iter {
            trace.stop_reason = format!("maximum of {} iterations reached", cfg.max_iter);
            break;
        }
        let jac = fd_jacobian(&mu, &eval.output, &trace.store, forward, cfg)?;
        let g = jac.j.transpose() * &eval.r;
        let g_norm = g.norm();
        if let Some(pg) = prev_grad {
            if pg > T::zero() {
                lambda *= g_norm / pg;
            }
        }
        let it = trace.iterations.last_mut().unwrap();
        it.grad_norm = Some(g_norm);
        it.t_fom.extend(&jac.t_fom);
        it.t_prom.extend(&jac.t_prom);
        it.fallbacks = jac.fallbacks.clone();
        if g_norm < cfg.tol_grad && last_step.is_some_and(|s| s < cfg.tol_inc) {
            trace.converged = true;
            trace.stop_reason = "gradient and increment below tolerance".into();
            break;
        }

        let jtj = jac.j.transpose() * &jac.j;
        let mut attempt = 0;
        let delta = loop {
            match damped_step(&jtj, &g, lambda) {
                Ok(d) => break d,
                Err(e) if e.is_numerical() && attempt < MAX_DAMPING_RETRIES => {
                    attempt += 1;
                    lambda = (lambda * T::lit(10.0)).max(T::lit(1e-6));
                }
                Err(e) => return Err(e),
            }
        };
        let it = trace.iterations.last_mut().unwrap();
        it.lambda = Some(lambda);
        it.step_norm = Some(delta.norm());
        it.predicted_decrease = Some(g.dot(&delta));

        let next: Vec<T> = mu.values.iter().zip(delta.iter()).map(|(m, d)| *m + *d).collect();
        mu = mu.with_values(next);
        eval = objective(&mu, y, forward)?;
        trace.iterations.push(new_iteration(i + 1, &mu, &eval));
        trace.store.push(mu.values.clone(), eval.snapshots.clone());
        prev_grad = Some(g_norm);
        last_step = Some(delta.norm());
    }
    trace.wall_time = start.elapsed().as_secs_f64();
    let result = if trace.converged {
        mu
    } else {
        mu.with_values(trace.best().mu.clone())
    };
    Ok((result, trace))
}

fn new_iteration<T: Real>(iter: usize, mu: &ParameterSet<T>, eval: &FullEvaluation<T>) -> LmIteration<T> {
    LmIteration {
        iter,
        mu: mu.values.clone(),
        s: eval.s,
        grad_norm: None,
        lambda: None,
        step_norm: None,
        predicted_decrease: None,
        t_fom: vec![eval.seconds],
        t_prom: Vec::new(),
        fallbacks: Vec::new(),
    }
}

/// `beta = ratio / (1/alpha + 1/(1 + n_p))`.
pub fn predicted_speedup(alpha: f64, n_p: usize, iteration_ratio: f64) -> f64 {
    iteration_ratio / (1.0 / alpha + 1.0 / (1.0 + n_p as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    /// Mean full-order over mean reduced evaluation time.
    pub alpha: f64,
    /// Predicted total speedup from `alpha`, `n_p` and the iteration counts.
    pub beta: f64,
    /// Ratio of the summed evaluation times of the two runs.
    pub measured: f64,
    pub n_p: usize,
    pub iterations_fom: usize,
    pub iterations_prom: usize,
    pub t_fom_mean: f64,
    pub t_prom_mean: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Compares a full-order-gradient run with a reduced-gradient run.
pub fn speedup_report<T: Real>(trace_fom: &LmTrace<T>, trace_prom: &LmTrace<T>) -> SpeedupReport {
    let t_fom_mean = mean(trace_fom.fom_times().chain(trace_prom.iterations.iter().map(|it| it.t_fom[0])));
    let t_prom_mean = mean(trace_prom.prom_times());
    let alpha = t_fom_mean / t_prom_mean;
    let (n_f, n_r) = (trace_fom.updates(), trace_prom.updates());
    let ratio = if n_r == 0 { f64::NAN } else { n_f as f64 / n_r as f64 };
    SpeedupReport {
        alpha,
        beta: predicted_speedup(alpha, trace_prom.n_p(), ratio),
        measured: trace_fom.evaluation_time() / trace_prom.evaluation_time(),
        n_p: trace_prom.n_p(),
        iterations_fom: n_f,
        iterations_prom: n_r,
        t_fom_mean,
        t_prom_mean,
    }
}
