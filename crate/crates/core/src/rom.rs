//! Galerkin reduced-order model.
//!
//! Only the structural block is projected: `d ~ V d_r`. Every Newton
//! iteration assembles the full-order residual and tangent at the lifted
//! displacement and solves the `(q+4) x (q+4)` system
//!
//! ```text
//! [ V^T J_ss V   V^T J_sp ] [ dd_r ]     [ V^T R_s ]
//! [ J_0s V       J_00     ] [ dp   ] = - [ R_0     ]
//! ```
//!
//! Velocities and accelerations follow from the generalized-alpha update of
//! `d_r`; since `V` is constant they stay in its span and are stored lifted.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::TimeIntegrator;
use crate::linalg::{orthonormality_defect, solve_dense};
use crate::scalar::Real;
use crate::solver::{
    newton, pressure_step_cap, wrap_step_error, CoupledEval, CoupledModel, NewtonSystem, SolverTolerances, State,
    StepContext, StepReport, TimingBreakdown, Trajectory,
};
use crate::windkessel::{WkState, P_V};

/// Reduced coordinates together with the lifted full-order state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState<T: Real> {
    pub d_r: DVector<T>,
    /// Full state with `s.d = V d_r` (and `v`, `a` likewise lifted).
    pub state: State<T>,
}

impl<T: Real> ReducedState<T> {
    pub fn p(&self) -> &WkState<T> {
        &self.state.p
    }

    pub fn lifted(&self) -> &DVector<T> {
        &self.state.s.d
    }
}

/// A basis prepared for repeated projections.
#[derive(Debug, Clone)]
pub struct ReducedOperator<T: Real> {
    pub v: DMatrix<T>,
    vt: DMatrix<T>,
}

impl<T: Real> ReducedOperator<T> {
    pub fn new(v: DMatrix<T>) -> Result<Self> {
        if v.ncols() == 0 || v.ncols() > v.nrows() {
            return Err(Error::InvalidOrder {
                q: v.ncols(),
                max: v.nrows(),
            });
        }
        let defect = orthonormality_defect(&v);
        if !(defect < T::lit(1e-8)) {
            return Err(Error::InvalidInput(format!(
                "projection basis is not orthonormal (max |V^T V - I| = {defect:e})"
            )));
        }
        let vt = v.transpose();
        Ok(ReducedOperator { v, vt })
    }

    pub fn q(&self) -> usize {
        self.v.ncols()
    }

    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        &self.vt * x
    }

    pub fn lift(&self, x_r: &DVector<T>) -> DVector<T> {
        &self.v * x_r
    }
}

/// Initial reduced state: `d_r = V^T d(0)`, `v_r = V^T v(0)` and `a_r` from the
/// projected residual at `t = 0`.
pub fn initial_reduced_state<T: Real>(model: &CoupledModel<T>, op: &ReducedOperator<T>) -> Result<ReducedState<T>> {
    if op.v.nrows() != model.ndof() {
        return Err(Error::InvalidInput(format!(
            "basis has {} rows but the model has {} degrees of freedom",
            op.v.nrows(),
            model.ndof()
        )));
    }
    let full = model.initial_state()?;
    let d_r = op.project(&full.s.d);
    let mut s = full.s.clone();
    s.d = op.lift(&d_r);
    s.v = op.lift(&op.project(&full.s.v));
    s.a.fill(T::zero());
    let mut r = model.chamber.structural_residual(&s, full.p[P_V])?;
    // Pinned rows do not involve the acceleration; give them unit mass so the
    // projected mass matrix stays regular for bases that include them.
    let mut mass = DVector::zeros(model.ndof());
    for k in 0..model.ndof() {
        if model.chamber.mesh.is_pinned_dof(k) {
            r[k] = T::zero();
            mass[k] = T::one();
        } else {
            mass[k] = model.chamber.dof_mass(k);
        }
    }
    let mv = DMatrix::from_fn(op.v.nrows(), op.q(), |i, j| mass[i] * op.v[(i, j)]);
    let m_r = &op.vt * mv;
    let a_r = solve_dense(&m_r, &(-op.project(&r)))?;
    s.a = op.lift(&a_r);
    let (volume, _) = model.chamber.cavity_volume(&s.d)?;
    Ok(ReducedState {
        d_r,
        state: State {
            t: full.t,
            s,
            p: full.p,
            volume,
        },
    })
}

struct ReducedEval<T: Real> {
    full: CoupledEval<T>,
    r_r: DVector<T>,
}

struct ReducedSystem<'c, 'a, T: Real> {
    ctx: &'c StepContext<'a, T>,
    op: &'c ReducedOperator<T>,
    timing: TimingBreakdown,
}

impl<T: Real> NewtonSystem<T> for ReducedSystem<'_, '_, T> {
    type Eval = ReducedEval<T>;

    fn evaluate(&mut self, x: &DVector<T>) -> Result<ReducedEval<T>> {
        let q = self.op.q();
        let t0 = Instant::now();
        let d = self.op.lift(&x.rows(0, q).into_owned());
        let p = WkState::from_iterator(x.rows(q, 4).iter().copied());
        let t1 = Instant::now();
        let full = self.ctx.evaluate(&d, &p, true)?;
        let t2 = Instant::now();
        let r_r = self.op.project(&full.r_s);
        self.timing.linear_system += (t1 - t0).as_secs_f64() + t2.elapsed().as_secs_f64();
        self.timing.element_evaluation += (t2 - t1).as_secs_f64();
        Ok(ReducedEval { full, r_r })
    }

    fn residual_norms(&self, eval: &ReducedEval<T>) -> (T, T) {
        (eval.r_r.amax(), eval.full.r_0.norm())
    }

    fn residual_squares(&self, eval: &ReducedEval<T>) -> (T, T) {
        (eval.r_r.norm_squared(), eval.full.r_0.norm_squared())
    }

    fn increment(&mut self, eval: &ReducedEval<T>) -> Result<DVector<T>> {
        let start = Instant::now();
        let q = self.op.q();
        let full = &eval.full;
        let j_ss = full.j_ss.as_ref().expect("evaluation carries a tangent");
        let jv = j_ss.mul_dense(&self.op.v);
        let j_rr = &self.op.vt * jv;
        let j_rp = self.op.project(&full.j_sp);
        let j_pr = &self.op.vt * &full.j_0s;
        let mut jac = DMatrix::zeros(q + 4, q + 4);
        jac.view_mut((0, 0), (q, q)).copy_from(&j_rr);
        for i in 0..q {
            jac[(i, q + P_V)] = j_rp[i];
            jac[(q + P_V, i)] = j_pr[i];
        }
        jac.view_mut((q, q), (4, 4)).copy_from(&full.j_00);
        let mut rhs = DVector::zeros(q + 4);
        rhs.rows_mut(0, q).copy_from(&(-&eval.r_r));
        rhs.rows_mut(q, 4).copy_from(&(-full.r_0));
        let delta = solve_dense(&jac, &rhs);
        self.timing.linear_system += start.elapsed().as_secs_f64();
        delta
    }

    fn step_cap(&self, delta: &DVector<T>) -> T {
        pressure_step_cap(&self.ctx.model.windkessel, delta.rows(self.op.q(), 4).iter().copied())
    }

    fn timing(&self) -> TimingBreakdown {
        self.timing
    }
}

/// One reduced step from the constant predictor.
pub fn step_rom<T: Real>(
    model: &CoupledModel<T>,
    op: &ReducedOperator<T>,
    prev: &ReducedState<T>,
    integ: &TimeIntegrator<T>,
    tol: &SolverTolerances<T>,
) -> Result<(ReducedState<T>, StepReport<T>)> {
    let ctx = StepContext::new(model, integ, &prev.state);
    let q = op.q();
    let mut x = DVector::zeros(q + 4);
    x.rows_mut(0, q).copy_from(&prev.d_r);
    x.rows_mut(q, 4).copy_from(&prev.state.p);
    let mut system = ReducedSystem {
        ctx: &ctx,
        op,
        timing: TimingBreakdown::default(),
    };
    let (x, eval, report) = newton(&mut system, x, tol)?;
    let d_r = x.rows(0, q).into_owned();
    let p = WkState::from_iterator(x.rows(q, 4).iter().copied());
    let state = ctx.finish(op.lift(&d_r), p, eval.full.volume);
    Ok((ReducedState { d_r, state }, report))
}

/// Marches the reduced model from rest to `t_end`. The trajectory holds the
/// lifted displacements; its timing splits full-order assembly from
/// projections plus reduced solves.
pub fn run_rom<T: Real>(
    model: &CoupledModel<T>,
    v: &DMatrix<T>,
    integ: &TimeIntegrator<T>,
    tol: &SolverTolerances<T>,
) -> Result<Trajectory<T>> {
    integ.validate()?;
    tol.validate()?;
    let start = Instant::now();
    let op = ReducedOperator::new(v.clone())?;
    let mut state = initial_reduced_state(model, &op)?;
    let mut traj = Trajectory::start(&state.state);
    for step in 1..=integ.step_count() {
        let (next, report) = step_rom(model, &op, &state, integ, tol)
            .map_err(|e| wrap_step_error(step, state.state.t + integ.dt, e))?;
        traj.push(&next.state, report.iterations);
        traj.timing.add(&report.timing);
        state = next;
    }
    traj.wall_time = start.elapsed().as_secs_f64();
    traj.timing.other = (traj.wall_time - traj.timing.element_evaluation - traj.timing.linear_system).max(0.0);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormalize;
    use crate::solver::tests::small_model;
    use crate::solver::{run_fom, step_coupled};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn short(t_end: f64) -> TimeIntegrator<f64> {
        TimeIntegrator {
            t_end,
            ..TimeIntegrator::default()
        }
    }

    #[test]
    fn identity_basis_reproduces_fom_step() {
        let m = small_model(12);
        let integ = short(0.3);
        let tol = SolverTolerances::default();
        let fom = run_fom(&m, &integ, &tol).unwrap();
        let n = m.ndof();
        let op = ReducedOperator::new(DMatrix::<f64>::identity(n, n)).unwrap();
        // Start both from the same converged mid-systole state.
        let mut prev = m.initial_state().unwrap();
        for _ in 0..integ.step_count() {
            prev = step_coupled(&m, &prev, &integ, &tol).unwrap().0;
        }
        let red = ReducedState {
            d_r: prev.s.d.clone(),
            state: prev.clone(),
        };
        let (f, _) = step_coupled(&m, &prev, &integ, &tol).unwrap();
        let (r, _) = step_rom(&m, &op, &red, &integ, &tol).unwrap();
        assert!((&f.s.d - r.lifted()).amax() < 1e-9);
        assert!((f.p - r.p()).amax() < 1e-9);
        assert_eq!(r.p().len(), 4);
        assert!(fom.len() > 1);
    }

    #[test]
    fn one_mode_step_converges() {
        let m = small_model(12);
        let integ = short(0.35);
        let tol = SolverTolerances::default();
        let fom = run_fom(&m, &integ, &tol).unwrap();
        let v = crate::linalg::left_singular(&fom.snapshot_matrix(), 1).unwrap().0;
        let op = ReducedOperator::new(v).unwrap();
        let s0 = initial_reduced_state(&m, &op).unwrap();
        let (s1, _) = step_rom(&m, &op, &s0, &integ, &tol).unwrap();
        assert_eq!(s1.d_r.len(), 1);
        assert_eq!(s1.p().len(), 4);
    }

    #[test]
    fn galerkin_residual_is_small_and_lift_consistent() {
        let m = small_model(12);
        let integ = short(0.32);
        let tol = SolverTolerances::default();
        let fom = run_fom(&m, &integ, &tol).unwrap();
        let v = crate::linalg::left_singular(&fom.snapshot_matrix(), 6).unwrap().0;
        let op = ReducedOperator::new(v).unwrap();
        let mut s = initial_reduced_state(&m, &op).unwrap();
        for _ in 0..integ.step_count() {
            let prev = s.clone();
            let (next, _) = step_rom(&m, &op, &prev, &integ, &tol).unwrap();
            assert!((&op.v * &next.d_r - next.lifted()).amax() < 1e-12);
            // Fresh assembly of the mid-point residual at the converged state.
            let ctx = StepContext::new(&m, &integ, &prev.state);
            let eval = ctx.evaluate(next.lifted(), next.p(), false).unwrap();
            assert!(op.project(&eval.r_s).amax() < tol.tol_s_res);
            s = next;
        }
    }

    #[test]
    fn trajectory_depends_on_span_only() {
        let m = small_model(12);
        let integ = short(0.33);
        let tol = SolverTolerances::default();
        let fom = run_fom(&m, &integ, &tol).unwrap();
        let v = crate::linalg::left_singular(&fom.snapshot_matrix(), 4).unwrap().0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rot = orthonormalize(&DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let w = &v * rot;
        let a = run_rom(&m, &v, &integ, &tol).unwrap();
        let b = run_rom(&m, &w, &integ, &tol).unwrap();
        let diff = a
            .displacements
            .iter()
            .zip(&b.displacements)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).amax()));
        assert!(diff < 1e-8, "span invariance violated by {diff:e}");
    }

    #[test]
    fn timing_breakdown_accounts_for_wall_time() {
        let m = small_model(12);
        let integ = short(0.05);
        let tol = SolverTolerances::default();
        let n = m.ndof();
        let v = DMatrix::<f64>::identity(n, n).columns(0, 8).into_owned();
        let traj = run_rom(&m, &v, &integ, &tol).unwrap();
        assert!((traj.timing.total() - traj.wall_time).abs() <= 0.05 * traj.wall_time + 1e-9);
    }

    #[test]
    fn initial_acceleration_matches_full_order() {
        let mut m = small_model(10);
        // Start away from equilibrium so the initial acceleration is nonzero.
        m.chamber.prestress = 0.0;
        let n = m.ndof();
        let op = ReducedOperator::new(DMatrix::<f64>::identity(n, n)).unwrap();
        let red = initial_reduced_state(&m, &op).unwrap();
        let full = m.initial_state().unwrap();
        assert!(full.s.a.amax() > 1.0);
        assert!((&red.state.s.a - &full.s.a).amax() < 1e-9 * full.s.a.amax());
    }

    #[test]
    fn rejects_bad_bases() {
        let m = small_model(8);
        assert!(ReducedOperator::new(DMatrix::<f64>::from_element(16, 2, 1.0)).is_err());
        let op = ReducedOperator::new(DMatrix::<f64>::identity(10, 2)).unwrap();
        assert!(initial_reduced_state(&m, &op).is_err());
    }
}
