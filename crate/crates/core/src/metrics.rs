//! Error and scalar output measures of trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::chamber::ChamberMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::Trajectory;

/// Largest per-node displacement error norm over all steps and nodes (mm).
pub fn eps_inf_inf<T: Real>(rom: &Trajectory<T>, fom: &Trajectory<T>) -> Result<T> {
    if rom.times.len() != fom.times.len() {
        return Err(Error::IncompatibleTrajectories(format!(
            "{} vs {} time steps",
            rom.times.len(),
            fom.times.len()
        )));
    }
    for (k, (a, b)) in rom.times.iter().zip(&fom.times).enumerate() {
        if (*a - *b).abs() > T::lit(1e-9) * T::one().max(b.abs()) {
            return Err(Error::IncompatibleTrajectories(format!("time {k} differs: {a:e} vs {b:e}")));
        }
    }
    eps_inf_inf_fields(&rom.displacements, &fom.displacements)
}

/// [`eps_inf_inf`] on bare displacement histories with two components per node.
pub fn eps_inf_inf_fields<T: Real>(a: &[DVector<T>], b: &[DVector<T>]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::IncompatibleTrajectories(format!("{} vs {} steps", a.len(), b.len())));
    }
    let mut worst = T::zero();
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() || x.len() % 2 != 0 {
            return Err(Error::IncompatibleTrajectories(format!("{} vs {} displacement entries", x.len(), y.len())));
        }
        for i in 0..x.len() / 2 {
            let dx = x[2 * i] - y[2 * i];
            let dy = x[2 * i + 1] - y[2 * i + 1];
            worst = worst.max((dx * dx + dy * dy).sqrt());
        }
    }
    Ok(worst)
}

/// `(max V - min V) / max V`.
pub fn ejection_fraction<T: Real>(volumes: &[T]) -> Result<T> {
    let (lo, hi) = volume_range(volumes)?;
    Ok((hi - lo) / hi)
}

fn volume_range<T: Real>(volumes: &[T]) -> Result<(T, T)> {
    let first = *volumes
        .first()
        .ok_or_else(|| Error::InvalidInput("empty volume curve".into()))?;
    let (lo, hi) = volumes.iter().fold((first, first), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(hi > T::zero()) {
        return Err(Error::InvalidVolume(hi.as_f64()));
    }
    Ok((lo, hi))
}

/// Mean inward radial displacement of the marked nodes at every step (mm).
pub fn marked_displacement<T: Real>(traj: &Trajectory<T>, mesh: &ChamberMesh<T>) -> Result<Vec<T>> {
    if mesh.marked_nodes.is_empty() {
        return Err(Error::InvalidConfig("marked node set is empty".into()));
    }
    let dirs = mesh.inward_directions();
    let count = T::from_usize_lossy(mesh.marked_nodes.len());
    traj.displacements
        .iter()
        .map(|d| {
            if d.len() != mesh.ndof() {
                return Err(Error::IncompatibleTrajectories(format!(
                    "displacement has {} entries, mesh has {} DOFs",
                    d.len(),
                    mesh.ndof()
                )));
            }
            let sum = mesh.marked_nodes.iter().fold(T::zero(), |acc, &i| {
                acc + d[2 * i] * dirs[i].x + d[2 * i + 1] * dirs[i].y
            });
            Ok(sum / count)
        })
        .collect()
}

/// Clinical scalar outputs of one heartbeat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarOutputs {
    pub ef: f64,
    /// kPa
    pub p_v_max: f64,
    /// mm
    pub marked_disp_max: f64,
    /// mm^3
    pub v_min: f64,
    pub v_max: f64,
}

impl ScalarOutputs {
    pub fn from_trajectory<T: Real>(traj: &Trajectory<T>, mesh: &ChamberMesh<T>) -> Result<Self> {
        let (v_min, v_max) = volume_range(&traj.volumes)?;
        let p_v_max = traj.pressures.iter().map(|p| p[0]).fold(traj.pressures[0][0], |a, b| a.max(b));
        let disp = marked_displacement(traj, mesh)?;
        let marked_disp_max = disp.iter().copied().fold(disp[0], |a, b| a.max(b));
        Ok(ScalarOutputs {
            ef: ((v_max - v_min) / v_max).as_f64(),
            p_v_max: p_v_max.as_f64(),
            marked_disp_max: marked_disp_max.as_f64(),
            v_min: v_min.as_f64(),
            v_max: v_max.as_f64(),
        })
    }
}
