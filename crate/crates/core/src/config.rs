//! JSON experiment configuration.
//!
//! Units are kPa, mm, s and g throughout. Every block and field is optional;
//! missing entries take the defaults of the corresponding type.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::chamber::{ChamberMaterial, ChamberMesh, ChamberModel, MeshSpec};
use crate::error::{Error, Result};
use crate::integrator::TimeIntegrator;
use crate::interp::InterpMethod;
use crate::inverse::LmConfig;
use crate::params::{ParameterSet, ACTIVATION_PARAMETERS};
use crate::scalar::Real;
use crate::solver::{CoupledModel, SolverTolerances};
use crate::windkessel::WindkesselParams;

/// Everything needed to build and march one coupled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default, deny_unknown_fields)]
pub struct Scenario<T> {
    pub mesh: MeshSpec<T>,
    pub material: ChamberMaterial<T>,
    pub windkessel: WindkesselParams<T>,
    pub activation: ActivationParams<T>,
    pub integrator: TimeIntegrator<T>,
    pub tolerances: SolverTolerances<T>,
}

impl<T: Real> Default for Scenario<T> {
    fn default() -> Self {
        Scenario {
            mesh: MeshSpec::default(),
            material: ChamberMaterial::default(),
            windkessel: WindkesselParams::default(),
            activation: ActivationParams::default(),
            integrator: TimeIntegrator::default(),
            tolerances: SolverTolerances::default(),
        }
    }
}

impl<T: Real> Scenario<T> {
    pub fn build(&self) -> Result<CoupledModel<T>> {
        self.integrator.validate()?;
        self.tolerances.validate()?;
        let chamber = ChamberModel::new(ChamberMesh::ring(&self.mesh)?, self.material)?;
        CoupledModel::new(chamber, self.windkessel, self.activation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodConfig {
    pub q: usize,
    /// When set, `q` is chosen from the singular values instead.
    pub eps_pod: Option<f64>,
    /// Keep every `stride`-th step as a snapshot.
    pub stride: usize,
}

impl Default for PodConfig {
    fn default() -> Self {
        PodConfig {
            q: 30,
            eps_pod: None,
            stride: 1,
        }
    }
}

/// `lo:hi:count`, evenly spaced and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepRange {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n).map(|k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

impl FromStr for SweepRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidConfig(format!("range '{s}' must look like lo:hi:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].trim().parse().map_err(|_| bad())?;
        let hi = parts[1].trim().parse().map_err(|_| bad())?;
        let count = parts[2].trim().parse().map_err(|_| bad())?;
        Ok(SweepRange { lo, hi, count })
    }
}

impl fmt::Display for SweepRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.count)
    }
}

/// One-parameter interpolation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmorConfig {
    pub parameter: String,
    /// Physical value that normalizes the parameter.
    pub reference: f64,
    /// Physical sample values.
    pub samples: Vec<f64>,
    pub methods: Vec<InterpMethod>,
    /// Normalized query values.
    pub range: SweepRange,
}

impl Default for PmorConfig {
    fn default() -> Self {
        PmorConfig {
            parameter: "sigma".into(),
            reference: 280.0,
            samples: vec![280.0, 430.0],
            methods: InterpMethod::ALL.to_vec(),
            range: SweepRange {
                lo: 1.0,
                hi: 430.0 / 280.0,
                count: 7,
            },
        }
    }
}

impl PmorConfig {
    pub fn sample_parameters(&self) -> Result<Vec<ParameterSet<f64>>> {
        self.samples
            .iter()
            .map(|v| ParameterSet::scalar(&self.parameter, self.reference, *v))
            .collect()
    }

    pub fn query(&self, normalized: f64) -> Result<ParameterSet<f64>> {
        ParameterSet::scalar(&self.parameter, self.reference, normalized * self.reference)
    }
}

/// Calibration of activation parameters against a synthetic volume curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvanaConfig {
    pub parameters: Vec<String>,
    /// Physical starting values; they also normalize the parameters.
    pub initial: Vec<f64>,
    /// Physical values that generate the measurements.
    pub truth: Vec<f64>,
    /// Spacing of the volume samples (s).
    pub sample_interval: f64,
    pub lm: LmConfig<f64>,
}

impl Default for InvanaConfig {
    fn default() -> Self {
        InvanaConfig {
            parameters: ACTIVATION_PARAMETERS.iter().map(|s| s.to_string()).collect(),
            initial: vec![200.0, 15.0, -15.0, 0.35, 0.60],
            truth: vec![280.0, 10.0, -30.0, 0.246, 0.502],
            sample_interval: 0.01,
            lm: LmConfig::default(),
        }
    }
}

impl InvanaConfig {
    /// Starting point (all ones) and the normalized truth.
    pub fn parameter_sets(&self) -> Result<(ParameterSet<f64>, ParameterSet<f64>)> {
        let mu0 = ParameterSet::new(self.parameters.clone(), self.initial.clone())?;
        if self.truth.len() != mu0.len() {
            return Err(Error::InvalidConfig(format!(
                "{} truth values for {} parameters",
                self.truth.len(),
                mu0.len()
            )));
        }
        let truth = mu0.with_values(self.truth.iter().zip(&self.initial).map(|(t, i)| t / i).collect());
        Ok((mu0, truth))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario<f64>,
    pub pod: PodConfig,
    pub pmor: PmorConfig,
    pub invana: InvanaConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::default(),
            pod: PodConfig::default(),
            pmor: PmorConfig::default(),
            invana: InvanaConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.build()?;
        if self.pod.q == 0 || self.pod.stride == 0 {
            return Err(Error::InvalidConfig("pod.q and pod.stride must be positive".into()));
        }
        if let Some(eps) = self.pod.eps_pod {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidConfig(format!("pod.eps_pod must lie in (0, 1), got {eps}")));
            }
        }
        let samples = self.pmor.sample_parameters()?;
        if samples.is_empty() {
            return Err(Error::InvalidConfig("pmor.samples is empty".into()));
        }
        let mut model = self.scenario.build()?;
        for s in &samples {
            s.apply(&mut model)?;
        }
        self.invana.parameter_sets()?;
        self.invana.lm.validate()?;
        Ok(())
    }
}
