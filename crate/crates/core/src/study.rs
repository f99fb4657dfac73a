//! Multi-run studies: sample libraries, interpolation sweeps and reduced
//! order error curves.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{InvanaConfig, Scenario};
use crate::error::Result;
use crate::integrator::TimeIntegrator;
use crate::interp::{interpolate, InterpMethod, Sample, SampleLibrary};
use crate::inverse::{lm_run, ForwardModel, GradientSource, LmConfig, LmTrace, VolumeForward};
use crate::io::SweepRow;
use crate::linalg::left_singular;
use crate::metrics::{eps_inf_inf, ScalarOutputs};
use crate::params::ParameterSet;
use crate::pod::SnapshotMatrix;
use crate::rom::run_rom;
use crate::solver::{run_fom, CoupledModel, SolverTolerances, Trajectory};

/// A model with its time grid and Newton tolerances.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: CoupledModel<f64>,
    pub integ: TimeIntegrator<f64>,
    pub tol: SolverTolerances<f64>,
}

impl Setup {
    pub fn from_scenario(scenario: &Scenario<f64>) -> Result<Self> {
        Ok(Setup {
            model: scenario.build()?,
            integ: scenario.integrator,
            tol: scenario.tolerances,
        })
    }

    pub fn model_at(&self, mu: &ParameterSet<f64>) -> Result<CoupledModel<f64>> {
        let mut m = self.model.clone();
        mu.apply(&mut m)?;
        Ok(m)
    }

    pub fn fom(&self, mu: &ParameterSet<f64>) -> Result<Trajectory<f64>> {
        run_fom(&self.model_at(mu)?, &self.integ, &self.tol)
    }

    pub fn rom(&self, mu: &ParameterSet<f64>, v: &DMatrix<f64>) -> Result<Trajectory<f64>> {
        run_rom(&self.model_at(mu)?, v, &self.integ, &self.tol)
    }

    /// Full-order runs at every sample, reduced to a library of order `q`.
    pub fn library(&self, samples: &[ParameterSet<f64>], q: usize, stride: usize) -> Result<(SampleLibrary<f64>, Vec<Trajectory<f64>>)> {
        let runs: Vec<Trajectory<f64>> = samples.par_iter().map(|mu| self.fom(mu)).collect::<Result<_>>()?;
        let lib = samples
            .iter()
            .zip(&runs)
            .map(|(mu, traj)| {
                let d = SnapshotMatrix::from_trajectory(traj, Some(mu.clone()), self.integ.dt, stride)?;
                Sample::from_snapshots(mu.clone(), d, q)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((SampleLibrary::new(lib)?, runs))
    }
}

/// Outcome of a synthetic calibration run.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub estimate: ParameterSet<f64>,
    /// Normalized parameters that generated the measurements.
    pub truth: ParameterSet<f64>,
    pub trace: LmTrace<f64>,
}

impl Calibration {
    /// Largest relative deviation of the estimate from the truth.
    pub fn max_relative_error(&self) -> f64 {
        self.estimate
            .values
            .iter()
            .zip(&self.truth.values)
            .map(|(e, t)| ((e - t) / t).abs())
            .fold(0.0, f64::max)
    }
}

/// Generates volume measurements at the configured truth and fits them from
/// the configured start.
pub fn calibrate(setup: &Setup, cfg: &InvanaConfig, gradients: GradientSource) -> Result<Calibration> {
    let (mu0, truth) = cfg.parameter_sets()?;
    let forward = VolumeForward::new(setup.model.clone(), setup.integ, setup.tol, cfg.sample_interval)?;
    let (y, _) = forward.full(&truth)?;
    let lm = LmConfig { gradients, ..cfg.lm };
    let (estimate, trace) = lm_run(&mu0, &y, &forward, &lm)?;
    Ok(Calibration { estimate, truth, trace })
}

/// Result of one sweep query.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// A `fom` row followed by one row per method.
    pub rows: Vec<SweepRow>,
    /// Failed methods (their row holds NaN) and interpolation warnings.
    pub warnings: Vec<String>,
}

fn row(mu: f64, method: &str, eps: f64, out: Option<ScalarOutputs>) -> SweepRow {
    SweepRow {
        mu,
        method: method.to_string(),
        eps_inf_inf: eps,
        ef: out.map_or(f64::NAN, |o| o.ef),
        p_max: out.map_or(f64::NAN, |o| o.p_v_max),
        marked_disp: out.map_or(f64::NAN, |o| o.marked_disp_max),
    }
}

/// Reduced runs on interpolated bases at `mu`, compared with the full-order
/// run `fom` at the same parameter.
pub fn sweep_point(
    setup: &Setup,
    lib: &SampleLibrary<f64>,
    mu: &ParameterSet<f64>,
    methods: &[InterpMethod],
    fom: &Trajectory<f64>,
) -> Result<SweepPoint> {
    let mesh = &setup.model.chamber.mesh;
    let x = mu.values[0];
    let mut point = SweepPoint {
        rows: vec![row(x, "fom", 0.0, Some(ScalarOutputs::from_trajectory(fom, mesh)?))],
        warnings: Vec::new(),
    };
    for &m in methods {
        let attempt = interpolate(lib, mu, m).and_then(|basis| {
            let traj = setup.rom(mu, &basis.v)?;
            Ok((basis.warnings, eps_inf_inf(&traj, fom)?, ScalarOutputs::from_trajectory(&traj, mesh)?))
        });
        match attempt {
            Ok((warnings, eps, out)) => {
                point.warnings.extend(warnings.into_iter().map(|w| format!("{m} at {x}: {w}")));
                point.rows.push(row(x, &m.to_string(), eps, Some(out)));
            }
            Err(e) if e.is_numerical() => {
                point.warnings.push(format!("{m} at {x} failed: {e}"));
                point.rows.push(row(x, &m.to_string(), f64::NAN, None));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(point)
}

/// `eps_inf_inf` of reduced runs at the snapshot parameter for each order in `orders`.
pub fn error_vs_order(
    setup: &Setup,
    mu: &ParameterSet<f64>,
    fom: &Trajectory<f64>,
    snapshots: &DMatrix<f64>,
    orders: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let max = orders.iter().copied().max().unwrap_or(0);
    let (v_all, _) = left_singular(snapshots, max)?;
    orders
        .iter()
        .map(|&q| {
            let v = v_all.columns(0, q).into_owned();
            let traj = setup.rom(mu, &v)?;
            Ok((q, eps_inf_inf(&traj, fom)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamber::{ChamberMaterial, ChamberMesh, ChamberModel, MeshSpec};
    use crate::activation::ActivationParams;
    use crate::windkessel::WindkesselParams;

    fn setup() -> Setup {
        let mesh = ChamberMesh::ring(&MeshSpec {
            node_count: 16,
            marked_count: 3,
            ..MeshSpec::default()
        })
        .unwrap();
        let chamber = ChamberModel::new(mesh, ChamberMaterial::default()).unwrap();
        Setup {
            model: CoupledModel::new(chamber, WindkesselParams::default(), ActivationParams::default()).unwrap(),
            integ: TimeIntegrator {
                t_end: 0.35,
                ..TimeIntegrator::default()
            },
            tol: SolverTolerances::default(),
        }
    }

    #[test]
    fn sweep_at_sample_matches_library_run() {
        let s = setup();
        let samples: Vec<_> = [280.0, 330.0].iter().map(|v| ParameterSet::scalar("sigma", 280.0, *v).unwrap()).collect();
        let (lib, runs) = s.library(&samples, 6, 2).unwrap();
        assert_eq!(lib.len(), 2);
        let point = sweep_point(&s, &lib, &samples[1], &InterpMethod::ALL, &runs[1]).unwrap();
        assert_eq!(point.rows.len(), 5);
        assert_eq!(point.rows[0].method, "fom");
        assert_eq!(point.rows[0].eps_inf_inf, 0.0);
        for r in &point.rows[1..] {
            assert!(r.eps_inf_inf.is_finite() && r.eps_inf_inf < 0.5, "{r:?}");
        }
    }

    #[test]
    fn error_vs_order_reaches_full_rank() {
        let s = setup();
        let mu = ParameterSet::scalar("sigma", 280.0, 280.0).unwrap();
        let fom = s.fom(&mu).unwrap();
        let errs = error_vs_order(&s, &mu, &fom, &fom.snapshot_matrix(), &[1, 32]).unwrap();
        assert!(errs[1].1 < 1e-6 && errs[1].1 < errs[0].1, "{errs:?}");
    }
}
