//! Monolithic Newton solution of the coupled chamber/windkessel system.
//!
//! Per step the unknowns are `(d_{n+1}, p_{n+1})`. The structural residual is
//! evaluated at the generalized-alpha mid-points, the windkessel residual at
//! the end of the step with its own theta blending.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::activation::{step_tau, ActivationParams, ActiveStressState};
use crate::chamber::{ChamberModel, StructState};
use crate::error::{Error, Result};
use crate::integrator::{GenAlpha, TimeIntegrator};
use crate::linalg::{solve_dense, Csr};
use crate::scalar::Real;
use crate::windkessel::{WindkesselParams, WkState, WkStep, P_V};

/// Newton stopping thresholds, read from the `tolerances` config block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct SolverTolerances<T> {
    /// Structural residual, max-norm.
    pub tol_s_res: T,
    /// Structural increment, max-norm.
    pub tol_s_inc: T,
    /// Windkessel residual, 2-norm.
    pub tol_0d_res: T,
    /// Windkessel increment, 2-norm.
    pub tol_0d_inc: T,
    pub max_newton: usize,
}

impl<T: Real> Default for SolverTolerances<T> {
    fn default() -> Self {
        SolverTolerances {
            tol_s_res: T::lit(1e-6),
            tol_s_inc: T::lit(1e-8),
            // Volume-rate roundoff alone is ~2e-8 mm^3/s at ejection flows.
            tol_0d_res: T::lit(1e-6),
            tol_0d_inc: T::lit(1e-8),
            max_newton: 25,
        }
    }
}

impl<T: Real> SolverTolerances<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if self.tol_s_res > z && self.tol_s_inc > z && self.tol_0d_res > z && self.tol_0d_inc > z && self.max_newton > 0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("tolerances must be positive: {self:?}")))
        }
    }

    pub(crate) fn converged(&self, norms: &IterationNorms<T>) -> bool {
        norms.struct_res < self.tol_s_res
            && norms.struct_inc < self.tol_s_inc
            && norms.wk_res < self.tol_0d_res
            && norms.wk_inc < self.tol_0d_inc
    }
}

/// The four norms checked at each Newton iteration. For the reduced model the
/// structural entries refer to the projected residual and reduced increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationNorms<T> {
    pub struct_res: T,
    pub struct_inc: T,
    pub wk_res: T,
    pub wk_inc: T,
}

/// Newton history of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    /// Number of residual assemblies, including the converged one.
    pub iterations: usize,
    pub norms: Vec<IterationNorms<T>>,
    /// Assembly and linear-solve time spent in this step.
    pub timing: TimingBreakdown,
}

impl<T: Real> StepReport<T> {
    pub(crate) fn nonconvergence(&self) -> Error {
        Error::NonConvergence {
            iterations: self.iterations,
            residual_history: self
                .norms
                .iter()
                .map(|n| n.struct_res.as_f64().max(n.wk_res.as_f64()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledModel<T: Real> {
    pub chamber: ChamberModel<T>,
    pub windkessel: WindkesselParams<T>,
    pub activation: ActivationParams<T>,
}

impl<T: Real> CoupledModel<T> {
    pub fn new(chamber: ChamberModel<T>, windkessel: WindkesselParams<T>, activation: ActivationParams<T>) -> Result<Self> {
        windkessel.validate()?;
        activation.validate()?;
        Ok(CoupledModel {
            chamber: chamber.with_prestress(windkessel.p_ref),
            windkessel,
            activation,
        })
    }

    pub fn ndof(&self) -> usize {
        self.chamber.ndof()
    }

    /// Rest state at `t = 0` with the windkessel at equilibrium and the
    /// acceleration that satisfies the structural residual.
    pub fn initial_state(&self) -> Result<State<T>> {
        let mut s = StructState::at_rest(&self.chamber.mesh);
        let p = self.windkessel.equilibrium();
        let r = self.chamber.structural_residual(&s, p[P_V])?;
        for k in 0..self.ndof() {
            if !self.chamber.mesh.is_pinned_dof(k) {
                s.a[k] = -r[k] / self.chamber.dof_mass(k);
            }
        }
        let (volume, _) = self.chamber.cavity_volume(&s.d)?;
        Ok(State {
            t: T::zero(),
            s,
            p,
            volume,
        })
    }
}

/// Full coupled state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T: Real> {
    pub t: T,
    pub s: StructState<T>,
    pub p: WkState<T>,
    pub volume: T,
}

/// Residuals and Jacobian blocks of one step at a trial `(d_{n+1}, p_{n+1})`.
#[derive(Debug, Clone)]
pub struct CoupledEval<T: Real> {
    pub r_s: DVector<T>,
    pub r_0: WkState<T>,
    pub volume: T,
    /// `dR^S/dd_{n+1}` including the integrator chain factors.
    pub j_ss: Option<Csr<T>>,
    /// `dR^S/dp_v`.
    pub j_sp: DVector<T>,
    /// `dR^0D_0/dd_{n+1}`; the other three rows vanish.
    pub j_0s: DVector<T>,
    pub j_00: Matrix4<T>,
}

/// Everything fixed during the Newton iterations of one step.
pub struct StepContext<'a, T: Real> {
    pub model: &'a CoupledModel<T>,
    pub prev: &'a State<T>,
    pub ga: GenAlpha<T>,
    pub dt: T,
    pub t_new: T,
    wk_step: WkStep<T>,
    tau_new: Vec<ActiveStressState<T>>,
    tau_mid: Vec<ActiveStressState<T>>,
}

impl<'a, T: Real> StepContext<'a, T> {
    pub fn new(model: &'a CoupledModel<T>, integ: &TimeIntegrator<T>, prev: &'a State<T>) -> Self {
        let ga = integ.gen_alpha();
        let dt = integ.dt;
        let t_new = prev.t + dt;
        let tau_new: Vec<_> = prev
            .s
            .tau
            .iter()
            .map(|&tau| step_tau(tau, prev.t, t_new, &model.activation, integ.theta))
            .collect();
        let tau_mid = tau_new
            .iter()
            .zip(&prev.s.tau)
            .map(|(n, o)| ActiveStressState {
                tau: ga.mid_f_scalar(n.tau, o.tau),
            })
            .collect();
        StepContext {
            model,
            prev,
            ga,
            dt,
            t_new,
            wk_step: WkStep {
                dt,
                t_old: prev.t,
                theta: integ.theta,
            },
            tau_new,
            tau_mid,
        }
    }

    fn mid_state(&self, d_new: &DVector<T>) -> StructState<T> {
        let prev = &self.prev.s;
        let (v_new, a_new) = self.ga.kinematics(self.dt, d_new, &prev.d, &prev.v, &prev.a);
        StructState {
            d: self.ga.mid_f(d_new, &prev.d),
            v: self.ga.mid_f(&v_new, &prev.v),
            a: self.ga.mid_m(&a_new, &prev.a),
            tau: self.tau_mid.clone(),
        }
    }

    pub fn evaluate(&self, d_new: &DVector<T>, p_new: &WkState<T>, with_jacobian: bool) -> Result<CoupledEval<T>> {
        let model = self.model;
        let mid = self.mid_state(d_new);
        let p_mid = self.ga.mid_f_scalar(p_new[P_V], self.prev.p[P_V]);
        let factors = self.ga.factors(self.dt);
        let asm = model.chamber.assemble(&mid, p_mid, with_jacobian.then_some(factors))?;
        let (volume, grad) = model.chamber.cavity_volume(d_new)?;
        let dvol = model.chamber.volume_change(&self.prev.s.d, d_new);
        let r_0 = self.wk_step.residual(p_new, &self.prev.p, dvol, &model.windkessel);
        let j_00 = self.wk_step.jacobian_p(p_new, &self.prev.p, &model.windkessel);
        // Without a tangent the chamber returns the unscaled pressure derivative.
        let j_sp = if with_jacobian { asm.dr_dpv } else { asm.dr_dpv * factors.pressure };
        Ok(CoupledEval {
            r_s: asm.residual,
            r_0,
            volume,
            j_ss: asm.jacobian,
            j_sp,
            j_0s: grad * self.wk_step.volume_coupling(),
            j_00,
        })
    }

    /// Dense `(n+4) x (n+4)` block Jacobian `[J_ss, J_sp e_0^T; e_0 J_0s^T, J_00]`.
    pub fn dense_jacobian(&self, eval: &CoupledEval<T>) -> DMatrix<T> {
        let n = self.model.ndof();
        let mut j = DMatrix::zeros(n + 4, n + 4);
        let j_ss = eval.j_ss.as_ref().expect("evaluation carries a tangent");
        for r in 0..n {
            for (c, v) in j_ss.row(r) {
                j[(r, c)] = v;
            }
            j[(r, n + P_V)] = eval.j_sp[r];
        }
        for c in 0..n {
            j[(n + P_V, c)] = eval.j_0s[c];
        }
        j.view_mut((n, n), (4, 4)).copy_from(&eval.j_00);
        j
    }

    /// Stacked residual `[R^S; R^0D]`.
    pub fn stacked_residual(&self, eval: &CoupledEval<T>) -> DVector<T> {
        let n = self.model.ndof();
        let mut r = DVector::zeros(n + 4);
        r.rows_mut(0, n).copy_from(&eval.r_s);
        r.rows_mut(n, 4).copy_from(&eval.r_0);
        r
    }

    pub fn finish(&self, d_new: DVector<T>, p_new: WkState<T>, volume: T) -> State<T> {
        let prev = &self.prev.s;
        let (v, a) = self.ga.kinematics(self.dt, &d_new, &prev.d, &prev.v, &prev.a);
        State {
            t: self.t_new,
            s: StructState {
                d: d_new,
                v,
                a,
                tau: self.tau_new.clone(),
            },
            p: p_new,
            volume,
        }
    }
}

/// One coupled step from the constant-displacement, constant-pressure predictor.
pub fn step_coupled<T: Real>(
    model: &CoupledModel<T>,
    prev: &State<T>,
    integ: &TimeIntegrator<T>,
    tol: &SolverTolerances<T>,
) -> Result<(State<T>, StepReport<T>)> {
    step_coupled_from(model, prev, integ, tol, prev.s.d.clone(), prev.p)
}

/// One coupled step starting Newton from the given guess for `(d_{n+1}, p_{n+1})`.
pub fn step_coupled_from<T: Real>(
    model: &CoupledModel<T>,
    prev: &State<T>,
    integ: &TimeIntegrator<T>,
    tol: &SolverTolerances<T>,
    d: DVector<T>,
    p: WkState<T>,
) -> Result<(State<T>, StepReport<T>)> {
    let ctx = StepContext::new(model, integ, prev);
    let n = model.ndof();
    let mut x = DVector::zeros(n + 4);
    x.rows_mut(0, n).copy_from(&d);
    x.rows_mut(n, 4).copy_from(&p);
    let mut system = FullSystem {
        ctx: &ctx,
        n,
        timing: TimingBreakdown::default(),
    };
    let (x, eval, report) = newton(&mut system, x, tol)?;
    let p = WkState::from_iterator(x.rows(n, 4).iter().copied());
    Ok((ctx.finish(x.rows(0, n).into_owned(), p, eval.volume), report))
}

/// A nonlinear system whose unknown vector ends with the four windkessel
/// unknowns and starts with `x.len() - 4` structural coordinates.
pub(crate) trait NewtonSystem<T: Real> {
    type Eval;
    fn evaluate(&mut self, x: &DVector<T>) -> Result<Self::Eval>;
    /// `(structural residual max-norm, windkessel residual 2-norm)`.
    fn residual_norms(&self, eval: &Self::Eval) -> (T, T);
    /// Squared 2-norms `(|R_s|^2, |R_0|^2)` of the residual blocks the increment zeroes.
    fn residual_squares(&self, eval: &Self::Eval) -> (T, T);
    /// Newton increment at the evaluated point.
    fn increment(&mut self, eval: &Self::Eval) -> Result<DVector<T>>;
    /// Largest admissible fraction of `delta` to try first.
    fn step_cap(&self, delta: &DVector<T>) -> T;
    /// Time accumulated so far in `evaluate` and `increment`.
    fn timing(&self) -> TimingBreakdown;
}

/// Maximum number of step halvings in the backtracking line search.
const MAX_HALVINGS: usize = 10;

/// Newton iteration with a backtracking safeguard on the tolerance-scaled
/// residual `|R_s|^2/tol_s^2 + |R_0|^2/tol_0^2`, for which the Newton
/// increment is a descent direction. A full step is always tried first and is
/// kept whenever it lowers that merit or already meets both residual tolerances.
pub(crate) fn newton<T: Real, S: NewtonSystem<T>>(
    system: &mut S,
    mut x: DVector<T>,
    tol: &SolverTolerances<T>,
) -> Result<(DVector<T>, S::Eval, StepReport<T>)> {
    let m = x.len() - 4;
    let merit = |(s2, w2): (T, T)| s2 / (tol.tol_s_res * tol.tol_s_res) + w2 / (tol.tol_0d_res * tol.tol_0d_res);
    let mut report = StepReport {
        iterations: 0,
        norms: Vec::new(),
        timing: TimingBreakdown::default(),
    };
    let mut eval = system.evaluate(&x)?;
    let (mut inc_s, mut inc_0) = (T::zero(), T::zero());
    for it in 1..=tol.max_newton {
        report.iterations = it;
        let (struct_res, wk_res) = system.residual_norms(&eval);
        let norms = IterationNorms {
            struct_res,
            struct_inc: inc_s,
            wk_res,
            wk_inc: inc_0,
        };
        report.norms.push(norms);
        if !(struct_res.is_finite() && wk_res.is_finite()) {
            break;
        }
        if tol.converged(&norms) {
            report.timing = system.timing();
            return Ok((x, eval, report));
        }
        if it == tol.max_newton {
            break;
        }
        let delta = system.increment(&eval)?;
        let phi0 = merit(system.residual_squares(&eval));
        let mut scale = system.step_cap(&delta);
        let mut halvings = 0;
        loop {
            let trial = &x + &delta * scale;
            match system.evaluate(&trial) {
                Ok(trial_eval) => {
                    let phi = merit(system.residual_squares(&trial_eval));
                    let (rs, r0) = system.residual_norms(&trial_eval);
                    let meets = rs < tol.tol_s_res && r0 < tol.tol_0d_res;
                    if phi <= phi0 || meets || halvings == MAX_HALVINGS {
                        x = trial;
                        eval = trial_eval;
                        break;
                    }
                }
                Err(Error::DegenerateGeometry(_)) if halvings < MAX_HALVINGS => {}
                Err(e) => return Err(e),
            }
            scale *= T::lit(0.5);
            halvings += 1;
        }
        inc_s = delta.rows(0, m).amax() * scale;
        inc_0 = delta.rows(m, 4).norm() * scale;
    }
    Err(report.nonconvergence())
}

struct FullSystem<'c, 'a, T: Real> {
    ctx: &'c StepContext<'a, T>,
    n: usize,
    timing: TimingBreakdown,
}

impl<T: Real> NewtonSystem<T> for FullSystem<'_, '_, T> {
    type Eval = CoupledEval<T>;

    fn evaluate(&mut self, x: &DVector<T>) -> Result<CoupledEval<T>> {
        let d = x.rows(0, self.n).into_owned();
        let p = WkState::from_iterator(x.rows(self.n, 4).iter().copied());
        let start = Instant::now();
        let eval = self.ctx.evaluate(&d, &p, true);
        self.timing.element_evaluation += start.elapsed().as_secs_f64();
        eval
    }

    fn residual_norms(&self, eval: &CoupledEval<T>) -> (T, T) {
        (eval.r_s.amax(), eval.r_0.norm())
    }

    fn residual_squares(&self, eval: &CoupledEval<T>) -> (T, T) {
        (eval.r_s.norm_squared(), eval.r_0.norm_squared())
    }

    fn increment(&mut self, eval: &CoupledEval<T>) -> Result<DVector<T>> {
        let start = Instant::now();
        let jac = self.ctx.dense_jacobian(eval);
        let rhs = -self.ctx.stacked_residual(eval);
        let delta = solve_dense(&jac, &rhs);
        self.timing.linear_system += start.elapsed().as_secs_f64();
        delta
    }

    fn step_cap(&self, delta: &DVector<T>) -> T {
        pressure_step_cap(&self.ctx.model.windkessel, delta.rows(self.n, 4).iter().copied())
    }

    fn timing(&self) -> TimingBreakdown {
        self.timing
    }
}

/// Valve flows change by orders of magnitude over a few `k_valve`; pressure
/// increments are limited to that range per Newton iteration.
pub(crate) fn pressure_step_cap<T: Real>(wk: &WindkesselParams<T>, dp: impl Iterator<Item = T>) -> T {
    let limit = T::lit(PRESSURE_STEP_LIMIT) * wk.k_valve;
    dp.take(3).fold(T::one(), |cap, x| if x.abs() * cap > limit { limit / x.abs() } else { cap })
}

/// Maximum windkessel pressure change per Newton iteration, in units of `k_valve`.
const PRESSURE_STEP_LIMIT: f64 = 3.0;

/// Split of the wall time of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    /// Residual and tangent assembly of the full-order operators (s).
    pub element_evaluation: f64,
    /// Projections and linear solves (s).
    pub linear_system: f64,
    /// Everything else (s).
    pub other: f64,
}

impl TimingBreakdown {
    pub fn add(&mut self, other: &TimingBreakdown) {
        self.element_evaluation += other.element_evaluation;
        self.linear_system += other.linear_system;
        self.other += other.other;
    }

    pub fn total(&self) -> f64 {
        self.element_evaluation + self.linear_system + self.other
    }
}

/// Time history of a forward run. Index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub displacements: Vec<DVector<T>>,
    pub pressures: Vec<WkState<T>>,
    pub volumes: Vec<T>,
    /// Newton assemblies per step; 0 for the initial state.
    pub newton_iters: Vec<usize>,
    pub wall_time: f64,
    pub timing: TimingBreakdown,
}

impl<T: Real> Trajectory<T> {
    pub(crate) fn start(state: &State<T>) -> Self {
        Trajectory {
            times: vec![state.t],
            displacements: vec![state.s.d.clone()],
            pressures: vec![state.p],
            volumes: vec![state.volume],
            newton_iters: vec![0],
            wall_time: 0.0,
            timing: TimingBreakdown::default(),
        }
    }

    pub(crate) fn push(&mut self, state: &State<T>, iters: usize) {
        self.times.push(state.t);
        self.displacements.push(state.s.d.clone());
        self.pressures.push(state.p);
        self.volumes.push(state.volume);
        self.newton_iters.push(iters);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Snapshot matrix: converged displacements of every step, without the initial state.
    pub fn snapshot_matrix(&self) -> DMatrix<T> {
        let n = self.displacements[0].len();
        let cols = self.displacements.len() - 1;
        DMatrix::from_fn(n, cols, |r, c| self.displacements[c + 1][r])
    }
}

pub(crate) fn wrap_step_error<T: Real>(step: usize, t: T, e: Error) -> Error {
    Error::StepFailed {
        step,
        time: t.as_f64(),
        source: Box::new(e),
    }
}

/// Marches the full-order model from rest to `t_end`.
pub fn run_fom<T: Real>(
    model: &CoupledModel<T>,
    integ: &TimeIntegrator<T>,
    tol: &SolverTolerances<T>,
) -> Result<Trajectory<T>> {
    integ.validate()?;
    tol.validate()?;
    let start = Instant::now();
    let mut state = model.initial_state()?;
    let mut traj = Trajectory::start(&state);
    for step in 1..=integ.step_count() {
        let (next, report) =
            step_coupled(model, &state, integ, tol).map_err(|e| wrap_step_error(step, state.t + integ.dt, e))?;
        traj.push(&next, report.iterations);
        traj.timing.add(&report.timing);
        state = next;
    }
    traj.wall_time = start.elapsed().as_secs_f64();
    traj.timing.other = (traj.wall_time - traj.timing.element_evaluation - traj.timing.linear_system).max(0.0);
    Ok(traj)
}
