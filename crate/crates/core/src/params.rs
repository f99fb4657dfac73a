//! Normalized model parameters `mu`.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::CoupledModel;

/// Activation parameters that can be varied, with their config names.
pub const ACTIVATION_PARAMETERS: [&str; 5] = ["sigma", "alpha_max", "alpha_min", "t_sys", "t_dias"];

/// Parameters normalized by a reference value: `physical = values * initial_physical`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ParameterSet<T> {
    pub names: Vec<String>,
    pub values: Vec<T>,
    pub initial_physical: Vec<T>,
}

impl<T: Real> ParameterSet<T> {
    /// Parameter set at its reference point (all normalized values 1).
    pub fn new(names: Vec<String>, initial_physical: Vec<T>) -> Result<Self> {
        let set = ParameterSet {
            values: vec![T::one(); names.len()],
            names,
            initial_physical,
        };
        set.validate()?;
        Ok(set)
    }

    /// Single parameter normalized by `reference`, at physical value `physical`.
    pub fn scalar(name: &str, reference: T, physical: T) -> Result<Self> {
        let set = ParameterSet {
            names: vec![name.to_string()],
            values: vec![physical / reference],
            initial_physical: vec![reference],
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n == 0 || self.values.len() != n || self.initial_physical.len() != n {
            return Err(Error::InvalidConfig(format!(
                "parameter set needs matching, nonempty names/values/initial_physical ({} / {} / {})",
                n,
                self.values.len(),
                self.initial_physical.len()
            )));
        }
        // alpha_min has a negative reference.
        if self.initial_physical.iter().any(|r| *r == T::zero() || !r.is_finite()) {
            return Err(Error::InvalidConfig("parameter normalization references must be finite and nonzero".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("parameter values must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        ParameterSet {
            names: self.names.clone(),
            values,
            initial_physical: self.initial_physical.clone(),
        }
    }

    pub fn physical(&self) -> Vec<T> {
        self.values.iter().zip(&self.initial_physical).map(|(v, r)| *v * *r).collect()
    }

    /// Euclidean distance in normalized space.
    pub fn distance(&self, other: &ParameterSet<T>) -> T {
        distance(&self.values, &other.values)
    }

    /// Writes the physical values into the activation block of `model`.
    pub fn apply(&self, model: &mut CoupledModel<T>) -> Result<()> {
        for (name, value) in self.names.iter().zip(self.physical()) {
            set_activation(&mut model.activation, name, value)?;
        }
        model.activation.validate()
    }
}

pub(crate) fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y)).sqrt()
}

fn set_activation<T: Real>(act: &mut ActivationParams<T>, name: &str, value: T) -> Result<()> {
    let slot = match name {
        "sigma" => &mut act.sigma,
        "alpha_max" => &mut act.alpha_max,
        "alpha_min" => &mut act.alpha_min,
        "t_sys" => &mut act.t_sys,
        "t_dias" => &mut act.t_dias,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown parameter '{other}' (expected one of {ACTIVATION_PARAMETERS:?})"
            )))
        }
    };
    *slot = value;
    Ok(())
}
