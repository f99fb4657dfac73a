//! Proper orthogonal decomposition of snapshot matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::left_singular;
use crate::params::ParameterSet;
use crate::scalar::Real;
use crate::solver::Trajectory;

/// Column-wise displacement history `D = [d_1 ... d_ns]` of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix<T: Real> {
    pub data: DMatrix<T>,
    pub parameter: Option<ParameterSet<T>>,
    /// Time between consecutive columns.
    pub dt: T,
}

impl<T: Real> SnapshotMatrix<T> {
    pub fn new(data: DMatrix<T>, parameter: Option<ParameterSet<T>>, dt: T) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::InvalidInput("snapshot matrix must have at least one column".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("snapshot matrix has non-finite entries".into()));
        }
        Ok(SnapshotMatrix { data, parameter, dt })
    }

    /// Every `stride`-th converged step of `traj` (the initial state is excluded).
    pub fn from_trajectory(traj: &Trajectory<T>, parameter: Option<ParameterSet<T>>, dt: T, stride: usize) -> Result<Self> {
        let stride = stride.max(1);
        let all = traj.snapshot_matrix();
        let cols: Vec<usize> = (stride - 1..all.ncols()).step_by(stride).collect();
        let data = DMatrix::from_fn(all.nrows(), cols.len(), |r, c| all[(r, cols[c])]);
        Self::new(data, parameter, dt * T::from_usize_lossy(stride))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }
}

/// Where a basis came from.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisOrigin<T: Real> {
    /// POD of the snapshots at one parameter.
    Sample(ParameterSet<T>),
    /// Interpolated at a query parameter by the named method.
    Interpolated { query: ParameterSet<T>, method: String },
    Unknown,
}

/// Orthonormal projection matrix `V` (n x q).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis<T: Real> {
    pub v: DMatrix<T>,
    /// All singular values of the matrix the basis was extracted from.
    pub singular_values: Vec<T>,
    pub origin: BasisOrigin<T>,
    /// Non-fatal notes from the construction (e.g. ambiguous mode pairings).
    pub warnings: Vec<String>,
}

impl<T: Real> ProjectionBasis<T> {
    pub fn q(&self) -> usize {
        self.v.ncols()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }
}

/// First `q` left singular vectors of `D`.
pub fn pod_basis<T: Real>(d: &SnapshotMatrix<T>, q: usize) -> Result<ProjectionBasis<T>> {
    let max = d.nrows().min(d.ncols());
    if q == 0 || q > max {
        return Err(Error::InvalidOrder { q, max });
    }
    let (v, singular_values) = left_singular(&d.data, q)?;
    Ok(ProjectionBasis {
        v,
        singular_values,
        origin: d.parameter.clone().map_or(BasisOrigin::Unknown, BasisOrigin::Sample),
        warnings: Vec::new(),
    })
}

fn check_order<T>(singular_values: &[T], q: usize) -> Result<()> {
    if q > singular_values.len() {
        Err(Error::InvalidOrder {
            q,
            max: singular_values.len(),
        })
    } else {
        Ok(())
    }
}

fn energy<T: Real>(s: &[T]) -> T {
    s.iter().fold(T::zero(), |acc, x| acc + *x * *x)
}

/// Relative information content `sum_{i<=q} s_i^2 / sum_i s_i^2`.
pub fn ric<T: Real>(singular_values: &[T], q: usize) -> Result<T> {
    check_order(singular_values, q)?;
    let total = energy(singular_values);
    if total == T::zero() {
        return Err(Error::UndefinedRic);
    }
    Ok((energy(&singular_values[..q]) / total).min(T::one()))
}

/// Squared truncated singular values `e(q) = sum_{i>q} s_i^2`.
pub fn truncation_error<T: Real>(singular_values: &[T], q: usize) -> Result<T> {
    check_order(singular_values, q)?;
    Ok(energy(&singular_values[q..]))
}

/// Smallest `q` with `RIC(q) >= 1 - eps_pod`. Ties within roundoff of the
/// running sum resolve to the smaller order.
pub fn select_order<T: Real>(singular_values: &[T], eps_pod: T) -> Result<usize> {
    if !(eps_pod > T::zero() && eps_pod < T::one()) {
        return Err(Error::InvalidInput(format!("eps_pod must lie in (0, 1), got {eps_pod:e}")));
    }
    let total = energy(singular_values);
    if total == T::zero() {
        return Err(Error::UndefinedRic);
    }
    let target = (T::one() - eps_pod) * total - T::lit(4.0) * T::default_epsilon() * total;
    let mut acc = T::zero();
    for (i, s) in singular_values.iter().enumerate() {
        acc += *s * *s;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(singular_values.len())
}
