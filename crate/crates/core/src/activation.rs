//! Prescribed myofiber activation and the active stress evolution law
//! `tau' = -|u| tau + sigma |u|_+`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameters of the activation function `u(t)` and the contractility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct ActivationParams<T> {
    /// Contractility, upper bound of the active stress (kPa).
    pub sigma: T,
    /// Activation rate during systole (1/s).
    pub alpha_max: T,
    /// Deactivation rate outside systole (1/s, negative).
    pub alpha_min: T,
    /// Onset of systole (s).
    pub t_sys: T,
    /// Onset of diastole (s).
    pub t_dias: T,
    /// Sigmoid steepness (s).
    pub gamma: T,
}

impl<T: Real> Default for ActivationParams<T> {
    fn default() -> Self {
        ActivationParams {
            sigma: T::lit(280.0),
            alpha_max: T::lit(10.0),
            alpha_min: T::lit(-30.0),
            t_sys: T::lit(0.246),
            t_dias: T::lit(0.502),
            gamma: T::lit(0.005),
        }
    }
}

impl<T: Real> ActivationParams<T> {
    /// `sigma = 0` is accepted: it switches contraction off entirely.
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma >= T::zero()
            && self.gamma > T::zero()
            && self.t_sys < self.t_dias
            && self.alpha_max > T::zero()
            && self.alpha_min < T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "activation parameters violate sigma >= 0, gamma > 0, t_sys < t_dias, alpha_max > 0 > alpha_min: {self:?}"
            )))
        }
    }
}

/// `S+(dt) = (1 + tanh(dt/gamma)) / 2`, rising from 0 to 1.
#[inline]
pub fn sigmoid_plus<T: Real>(dt: T, gamma: T) -> T {
    T::lit(0.5) * (T::one() + (dt / gamma).tanh())
}

/// `S-(dt) = (1 - tanh(dt/gamma)) / 2`, falling from 1 to 0.
#[inline]
pub fn sigmoid_minus<T: Real>(dt: T, gamma: T) -> T {
    T::lit(0.5) * (T::one() - (dt / gamma).tanh())
}

/// Both sigmoids `(S+, S-)` at `dt`.
#[inline]
pub fn sigmoid_pair<T: Real>(dt: T, gamma: T) -> (T, T) {
    (sigmoid_plus(dt, gamma), sigmoid_minus(dt, gamma))
}

/// Systole indicator `f(t) = S+(t - t_sys) S-(t - t_dias)`.
pub fn systole_indicator<T: Real>(t: T, p: &ActivationParams<T>) -> T {
    sigmoid_plus(t - p.t_sys, p.gamma) * sigmoid_minus(t - p.t_dias, p.gamma)
}

/// Activation rate `u(t) = alpha_max f + alpha_min (1 - f)`.
pub fn activation_u<T: Real>(t: T, p: &ActivationParams<T>) -> T {
    let f = systole_indicator(t, p);
    p.alpha_max * f + p.alpha_min * (T::one() - f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveStressState<T> {
    pub tau: T,
}

impl<T: Real> Default for ActiveStressState<T> {
    fn default() -> Self {
        ActiveStressState { tau: T::zero() }
    }
}

/// Advances the active stress from `t0` to `t1` with the one-step-theta rule.
///
/// The right-hand side is evaluated at the theta-blended time and state,
/// `(tau1 - tau0)/h = -|u| tau_theta + sigma |u|_+`, which is linear in `tau1`
/// and solved in closed form. For `theta in [0.5, 1]` and `h |u| (1 - theta) <= 1`
/// the update maps `[0, sigma]` into itself.
pub fn step_tau<T: Real>(
    state: ActiveStressState<T>,
    t0: T,
    t1: T,
    p: &ActivationParams<T>,
    theta: T,
) -> ActiveStressState<T> {
    let h = t1 - t0;
    let u = activation_u(t0 + theta * h, p);
    let rate = u.abs();
    let drive = p.sigma * u.max(T::zero());
    let tau = (state.tau * (T::one() - (T::one() - theta) * h * rate) + h * drive)
        / (T::one() + theta * h * rate);
    ActiveStressState { tau }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ActivationParams<f64> {
        ActivationParams {
            sigma: 100.0,
            alpha_max: 10.0,
            alpha_min: -30.0,
            t_sys: 0.2,
            t_dias: 0.5,
            gamma: 0.005,
        }
    }

    #[test]
    fn sigmoid_values() {
        let (p, m) = sigmoid_pair(0.0, 0.005);
        assert_eq!((p, m), (0.5, 0.5));
        assert!((sigmoid_plus(10.0f64, 0.005) - 1.0).abs() < 1e-15);
        let expected = 0.5 * (1.0 + 1f64.tanh());
        assert!((sigmoid_plus(0.005, 0.005) - expected).abs() < 1e-15);
        assert!((expected - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn activation_limits() {
        let p = params();
        assert!((activation_u(0.0, &p) - p.alpha_min).abs() < 1e-9);
        assert!((activation_u(0.35, &p) - p.alpha_max).abs() < 1e-9);
        for i in 0..200 {
            let u = activation_u(i as f64 * 0.005, &p);
            assert!(u >= p.alpha_min - 1e-12 && u <= p.alpha_max + 1e-12);
        }
        assert_eq!(ActivationParams::<f64>::default().gamma, 0.005);
    }

    #[test]
    fn activation_shift_invariance() {
        let p = params();
        let s = 0.137;
        let q = ActivationParams {
            t_sys: p.t_sys + s,
            t_dias: p.t_dias + s,
            ..p
        };
        for i in 0..100 {
            let t = i as f64 * 0.01;
            assert!((activation_u(t, &p) - activation_u(t + s, &q)).abs() < 1e-12);
        }
    }

    fn constant_rate(a: f64) -> ActivationParams<f64> {
        // t_sys << 0 << t_dias with a tiny gamma gives f = 1 on [0, 1].
        ActivationParams {
            sigma: 50.0,
            alpha_max: a.max(1e-3),
            alpha_min: a.min(-1e-3),
            t_sys: if a > 0.0 { -10.0 } else { 10.0 },
            t_dias: 20.0,
            gamma: 1e-3,
        }
    }

    #[test]
    fn tau_constant_positive_rate_closed_form() {
        let a = 8.0;
        let p = constant_rate(a);
        let h = 1e-4;
        let mut s = ActiveStressState::default();
        let steps = (3.0 / a / h).round() as usize;
        for k in 0..steps {
            s = step_tau(s, k as f64 * h, (k + 1) as f64 * h, &p, 0.5);
        }
        let exact = p.sigma * (1.0 - (-3.0f64).exp());
        assert!((s.tau - exact).abs() < 1e-6 * p.sigma);
        assert!((s.tau / p.sigma - 0.9502).abs() < 1e-4);
    }

    #[test]
    fn tau_constant_negative_rate_decays() {
        let a = -5.0;
        let p = constant_rate(a);
        let h = 1e-4;
        let mut s = ActiveStressState { tau: 20.0 };
        for k in 0..2000 {
            s = step_tau(s, k as f64 * h, (k + 1) as f64 * h, &p, 0.5);
        }
        let exact = 20.0 * (a * 0.2f64).exp();
        assert!((s.tau - exact).abs() < 1e-6);
    }

    #[test]
    fn tau_zero_rate_is_frozen() {
        // With a huge steepness f is 1/4 everywhere, so u = 3/4 - 3/4 = 0.
        let p = ActivationParams {
            sigma: 10.0,
            alpha_max: 3.0,
            alpha_min: -1.0,
            t_sys: -0.5,
            t_dias: 0.5,
            gamma: 1e15,
        };
        assert!(activation_u(0.0f64, &p).abs() < 1e-12);
        let mut s = ActiveStressState { tau: 3.0 };
        for k in 0..100 {
            s = step_tau(s, k as f64 * 1e-3, (k + 1) as f64 * 1e-3, &p, 0.5);
        }
        assert!((s.tau - 3.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn tau_stays_in_bounds(
            sigma in 1.0f64..500.0,
            amax in 0.5f64..60.0,
            amin in -60.0f64..-0.5,
            ts in 0.0f64..0.4,
            width in 0.05f64..0.4,
            theta in 0.5f64..1.0,
        ) {
            let p = ActivationParams { sigma, alpha_max: amax, alpha_min: amin, t_sys: ts, t_dias: ts + width, gamma: 0.005 };
            let h = 1e-3;
            let mut s = ActiveStressState::default();
            for k in 0..1000 {
                s = step_tau(s, k as f64 * h, (k + 1) as f64 * h, &p, theta);
                proptest::prop_assert!(s.tau >= -1e-9 * sigma && s.tau <= sigma * (1.0 + 1e-9));
            }
        }
    }
}
