//! Generalized-alpha time integration of the structural equations.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::chamber::JacobianFactors;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Time grid and integrator settings, read from the `integrator` config block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct TimeIntegrator<T> {
    pub dt: T,
    pub t_end: T,
    /// Spectral radius at infinite frequency.
    pub rho_inf: T,
    /// One-step-theta weight of the windkessel.
    pub theta: T,
}

impl<T: Real> Default for TimeIntegrator<T> {
    fn default() -> Self {
        TimeIntegrator {
            dt: T::lit(1e-3),
            t_end: T::lit(0.8),
            rho_inf: T::lit(0.8),
            theta: T::lit(0.5),
        }
    }
}

impl<T: Real> TimeIntegrator<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > T::zero()
            && self.t_end > T::zero()
            && self.rho_inf >= T::zero()
            && self.rho_inf <= T::one()
            && self.theta >= T::lit(0.5)
            && self.theta <= T::one();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "integrator requires dt > 0, t_end > 0, rho_inf in [0, 1], theta in [0.5, 1]: {self:?}"
            )))
        }
    }

    /// Number of steps; `t_end` is rounded to the nearest multiple of `dt`.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round().as_f64().max(1.0) as usize
    }

    pub fn time(&self, step: usize) -> T {
        T::from_usize_lossy(step) * self.dt
    }

    pub fn gen_alpha(&self) -> GenAlpha<T> {
        GenAlpha::from_rho_inf(self.rho_inf)
    }
}

/// Generalized-alpha coefficients. Mid-point quantities are
/// `x_{n+1-alpha} = (1 - alpha) x_{n+1} + alpha x_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenAlpha<T> {
    pub alpha_m: T,
    pub alpha_f: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> GenAlpha<T> {
    pub fn from_rho_inf(rho: T) -> Self {
        let one = T::one();
        let alpha_m = (T::lit(2.0) * rho - one) / (rho + one);
        let alpha_f = rho / (rho + one);
        let s = one - alpha_m + alpha_f;
        GenAlpha {
            alpha_m,
            alpha_f,
            beta: T::lit(0.25) * s * s,
            gamma: T::lit(0.5) - alpha_m + alpha_f,
        }
    }

    /// Newmark acceleration and velocity at `n+1` for a trial displacement.
    pub fn kinematics(
        &self,
        dt: T,
        d_new: &DVector<T>,
        d_old: &DVector<T>,
        v_old: &DVector<T>,
        a_old: &DVector<T>,
    ) -> (DVector<T>, DVector<T>) {
        let one = T::one();
        let half = T::lit(0.5);
        let b = self.beta * dt * dt;
        let mut a_new = d_new - d_old;
        a_new.axpy(-dt, v_old, one);
        a_new.axpy(-dt * dt * (half - self.beta), a_old, one);
        a_new /= b;
        let mut v_new = v_old.clone();
        v_new.axpy(dt * (one - self.gamma), a_old, one);
        v_new.axpy(dt * self.gamma, &a_new, one);
        (v_new, a_new)
    }

    pub fn mid_f(&self, new: &DVector<T>, old: &DVector<T>) -> DVector<T> {
        new * (T::one() - self.alpha_f) + old * self.alpha_f
    }

    pub fn mid_m(&self, new: &DVector<T>, old: &DVector<T>) -> DVector<T> {
        new * (T::one() - self.alpha_m) + old * self.alpha_m
    }

    pub fn mid_f_scalar(&self, new: T, old: T) -> T {
        new * (T::one() - self.alpha_f) + old * self.alpha_f
    }

    /// Chain factors `d(mid-point)/d(d_{n+1})` for the mass, stiffness,
    /// damping and pressure contributions of the structural tangent.
    pub fn factors(&self, dt: T) -> JacobianFactors<T> {
        let one = T::one();
        JacobianFactors {
            mass: (one - self.alpha_m) / (self.beta * dt * dt),
            stiffness: one - self.alpha_f,
            damping: (one - self.alpha_f) * self.gamma / (self.beta * dt),
            pressure: one - self.alpha_f,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_for_rho_one_are_trapezoidal() {
        let g = GenAlpha::from_rho_inf(1.0f64);
        assert!((g.alpha_m - 0.5).abs() < 1e-15);
        assert!((g.alpha_f - 0.5).abs() < 1e-15);
        assert!((g.beta - 0.25).abs() < 1e-15);
        assert!((g.gamma - 0.5).abs() < 1e-15);
        let d = GenAlpha::from_rho_inf(0.8f64);
        assert!((d.alpha_m - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.alpha_f - 4.0 / 9.0).abs() < 1e-15);
        assert!((d.gamma - (0.5 - 1.0 / 3.0 + 4.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn step_count_rounds() {
        let t = TimeIntegrator { dt: 1e-3, t_end: 3e-3, ..TimeIntegrator::default() };
        assert_eq!(t.step_count(), 3);
        assert_eq!(TimeIntegrator::<f64>::default().step_count(), 800);
    }

    /// Integrates `m a + c v + k d = 0` with the generalized-alpha update used
    /// by the coupled solver; returns the error at `t_end` against the exact solution.
    fn oscillator_error(dt: f64, rho: f64) -> f64 {
        let (m, c, k) = (2.0, 0.3, 50.0);
        let g = GenAlpha::from_rho_inf(rho);
        let fac = g.factors(dt);
        let mut d = DVector::from_element(1, 1.0);
        let mut v = DVector::from_element(1, 0.0);
        let mut a = DVector::from_element(1, -k / m);
        let steps = (1.0 / dt).round() as usize;
        for _ in 0..steps {
            // Linear problem: one Newton step from the constant-displacement predictor is exact.
            let resid = |dn: &DVector<f64>| {
                let (vn, an) = g.kinematics(dt, dn, &d, &v, &a);
                m * g.mid_m(&an, &a)[0] + c * g.mid_f(&vn, &v)[0] + k * g.mid_f(dn, &d)[0]
            };
            let jac = fac.mass * m + fac.damping * c + fac.stiffness * k;
            let dn = &d - DVector::from_element(1, resid(&d) / jac);
            assert!(resid(&dn).abs() < 1e-12 * jac);
            let (vn, an) = g.kinematics(dt, &dn, &d, &v, &a);
            d = dn;
            v = vn;
            a = an;
        }
        let zeta = c / (2.0 * (k * m).sqrt());
        let wn = (k / m).sqrt();
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let exact = (-zeta * wn).exp() * ((wd).cos() + zeta * wn / wd * (wd).sin());
        (d[0] - exact).abs()
    }

    #[test]
    fn second_order_in_time() {
        for rho in [0.8, 0.5, 1.0] {
            let ratio = oscillator_error(2e-3, rho) / oscillator_error(1e-3, rho);
            assert!((3.5..=4.5).contains(&ratio), "rho {rho}: ratio {ratio}");
        }
    }
}
