//! Four-element windkessel with smooth diode valves, discretized with the
//! one-step-theta scheme.
//!
//! Unknowns are `p = [p_v, p_p, p_d, q_p]` (kPa, kPa, kPa, mm^3/s). The
//! equations are
//!
//! ```text
//! (p_v - p_at)/R_av + (p_v - p_p)/R_sl + dV/dt       = 0
//! q_p - (p_v - p_p)/R_sl + C_p dp_p/dt                = 0
//! q_p + (p_d - p_p)/R_p + (L_p/R_p) dq_p/dt           = 0
//! (p_d - p_ref)/R_d - q_p + C_d dp_d/dt               = 0
//! ```
//!
//! with `R_av = R(p_at, p_v)` and `R_sl = R(p_v, p_p)`.

use nalgebra::{DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::activation::{sigmoid_minus, sigmoid_plus};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub type WkState<T> = Vector4<T>;

/// Index of each unknown in [`WkState`].
pub const P_V: usize = 0;
pub const P_P: usize = 1;
pub const P_D: usize = 2;
pub const Q_P: usize = 3;

/// Prescribed atrial pressure: a smooth pulse on a constant baseline,
/// repeated with the cycle length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct AtrialPulse<T> {
    pub p_base: T,
    pub p_pulse: T,
    pub t_on: T,
    pub t_off: T,
    pub gamma: T,
    pub period: T,
}

impl<T: Real> Default for AtrialPulse<T> {
    fn default() -> Self {
        AtrialPulse {
            p_base: T::one(),
            p_pulse: T::lit(0.6),
            t_on: T::lit(0.1),
            t_off: T::lit(0.2),
            gamma: T::lit(0.01),
            period: T::lit(0.8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct WindkesselParams<T> {
    #[serde(rename = "C_p")]
    pub c_p: T,
    #[serde(rename = "C_d")]
    pub c_d: T,
    #[serde(rename = "R_p")]
    pub r_p: T,
    #[serde(rename = "R_d")]
    pub r_d: T,
    #[serde(rename = "L_p")]
    pub l_p: T,
    #[serde(rename = "R_min")]
    pub r_min: T,
    #[serde(rename = "R_max")]
    pub r_max: T,
    pub k_valve: T,
    pub p_ref: T,
    pub atrial: AtrialPulse<T>,
}

impl<T: Real> Default for WindkesselParams<T> {
    fn default() -> Self {
        WindkesselParams {
            c_p: T::lit(10.0),
            c_d: T::lit(150.0),
            r_p: T::lit(5e-4),
            r_d: T::lit(6e-3),
            l_p: T::lit(1e-6),
            r_min: T::lit(5e-5),
            r_max: T::one(),
            k_valve: T::lit(0.1),
            p_ref: T::one(),
            atrial: AtrialPulse::default(),
        }
    }
}

impl<T: Real> WindkesselParams<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let positive = [self.c_p, self.c_d, self.r_p, self.r_d, self.l_p, self.r_min, self.k_valve];
        if positive.iter().all(|&x| x > z)
            && self.r_min < self.r_max
            && self.atrial.gamma > z
            && self.atrial.period > z
            && self.atrial.t_on < self.atrial.t_off
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "windkessel requires positive R, C, L, k_valve, R_min < R_max and a well-formed atrial pulse: {self:?}"
            )))
        }
    }

    /// State with every pressure at `p_ref` and no flow.
    pub fn equilibrium(&self) -> WkState<T> {
        Vector4::new(self.p_ref, self.p_ref, self.p_ref, T::zero())
    }
}

/// Sigmoid valve resistance `R_min + (R_max - R_min) (1 + tanh((p_down - p_up)/k)) / 2`
/// and its derivative with respect to `p_down` (the `p_up` derivative is the negative).
pub fn valve_resistance_with_slope<T: Real>(p_up: T, p_down: T, wk: &WindkesselParams<T>) -> (T, T) {
    let th = ((p_down - p_up) / wk.k_valve).tanh();
    let span = wk.r_max - wk.r_min;
    let half = T::lit(0.5);
    let r = wk.r_min + span * half * (T::one() + th);
    let slope = span * half * (T::one() - th * th) / wk.k_valve;
    (r, slope)
}

pub fn valve_resistance<T: Real>(p_up: T, p_down: T, wk: &WindkesselParams<T>) -> T {
    valve_resistance_with_slope(p_up, p_down, wk).0
}

/// `p_at(t)`, periodic with `atrial.period`.
pub fn atrial_pressure<T: Real>(t: T, wk: &WindkesselParams<T>) -> T {
    let a = &wk.atrial;
    let tm = t - (t / a.period).floor() * a.period;
    let mut pulse = T::zero();
    for k in -1i32..=1 {
        let s = tm + T::lit(k as f64) * a.period;
        pulse += sigmoid_plus(s - a.t_on, a.gamma) * sigmoid_minus(s - a.t_off, a.gamma);
    }
    a.p_base + a.p_pulse * pulse
}

/// Flow `(p_up - p_down)/R(p_up, p_down)` through a valve and its partials
/// with respect to `p_up` and `p_down`.
fn valve_flow<T: Real>(p_up: T, p_down: T, wk: &WindkesselParams<T>) -> (T, T, T) {
    let (r, slope) = valve_resistance_with_slope(p_up, p_down, wk);
    let dp = p_up - p_down;
    let q = dp / r;
    // dR/dp_up = -slope, dR/dp_down = slope.
    let d_up = T::one() / r + dp * slope / (r * r);
    let d_down = -T::one() / r - dp * slope / (r * r);
    (q, d_up, d_down)
}

/// Discrete circuit for one step of length `dt` starting at `t_old`.
#[derive(Debug, Clone, Copy)]
pub struct WkStep<T> {
    pub dt: T,
    pub t_old: T,
    pub theta: T,
}

impl<T: Real> WkStep<T> {
    fn blend(&self, p_new: &WkState<T>, p_old: &WkState<T>) -> WkState<T> {
        p_new * self.theta + p_old * (T::one() - self.theta)
    }

    /// Residual given the change of cavity volume over the step.
    pub fn residual(
        &self,
        p_new: &WkState<T>,
        p_old: &WkState<T>,
        volume_change: T,
        wk: &WindkesselParams<T>,
    ) -> WkState<T> {
        let pt = self.blend(p_new, p_old);
        let p_at = atrial_pressure(self.t_old + self.theta * self.dt, wk);
        let rate = (p_new - p_old) / self.dt;
        let (q_in, _, _) = valve_flow(p_at, pt[P_V], wk);
        let (q_sl, _, _) = valve_flow(pt[P_V], pt[P_P], wk);
        Vector4::new(
            q_sl - q_in + volume_change / self.dt,
            pt[Q_P] - q_sl + wk.c_p * rate[P_P],
            pt[Q_P] + (pt[P_D] - pt[P_P]) / wk.r_p + wk.l_p / wk.r_p * rate[Q_P],
            (pt[P_D] - wk.p_ref) / wk.r_d - pt[Q_P] + wk.c_d * rate[P_D],
        )
    }

    /// `dR/dp_new`; the volume coupling is `dR_0/dV_new = 1/dt` (see [`Self::volume_coupling`]).
    pub fn jacobian_p(&self, p_new: &WkState<T>, p_old: &WkState<T>, wk: &WindkesselParams<T>) -> Matrix4<T> {
        let pt = self.blend(p_new, p_old);
        let p_at = atrial_pressure(self.t_old + self.theta * self.dt, wk);
        let (_, _, din_v) = valve_flow(p_at, pt[P_V], wk);
        let dav_v = -din_v;
        let (_, dsl_v, dsl_p) = valve_flow(pt[P_V], pt[P_P], wk);
        let z = T::zero();
        let one = T::one();
        let inv_rp = one / wk.r_p;
        let inv_rd = one / wk.r_d;
        let g = Matrix4::new(
            dav_v + dsl_v, dsl_p, z, z,
            -dsl_v, -dsl_p, z, one,
            z, -inv_rp, inv_rp, one,
            z, z, inv_rd, -one,
        );
        let inv_dt = one / self.dt;
        let mut m = g * self.theta;
        m[(1, P_P)] += wk.c_p * inv_dt;
        m[(2, Q_P)] += wk.l_p * inv_rp * inv_dt;
        m[(3, P_D)] += wk.c_d * inv_dt;
        m
    }

    /// `dR_0/dV_new`.
    pub fn volume_coupling(&self) -> T {
        T::one() / self.dt
    }
}

/// Residual and Jacobian blocks in terms of structural displacements.
/// `volume_change(d_old, d_new)` returns `V(d_new) - V(d_old)` and `gradient(d)` returns `dV/dd`.
pub fn wk_residual_from_displacements<T: Real, F, G>(
    step: &WkStep<T>,
    p_new: &WkState<T>,
    p_old: &WkState<T>,
    d_new: &DVector<T>,
    d_old: &DVector<T>,
    wk: &WindkesselParams<T>,
    volume_change: F,
    gradient: G,
) -> Result<(WkState<T>, Matrix4<T>, DVector<T>)>
where
    F: Fn(&DVector<T>, &DVector<T>) -> Result<T>,
    G: Fn(&DVector<T>) -> Result<DVector<T>>,
{
    let dv = volume_change(d_old, d_new)?;
    let r = step.residual(p_new, p_old, dv, wk);
    let jp = step.jacobian_p(p_new, p_old, wk);
    Ok((r, jp, gradient(d_new)? * step.volume_coupling()))
}
