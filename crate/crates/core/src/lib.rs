//! Parametric projection-based reduced-order modelling of a contracting
//! chamber coupled to a lumped circulation model.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the `f64` aliases at the crate root are what the
//! command-line tool uses.

pub mod activation;
pub mod chamber;
pub mod config;
pub mod error;
pub mod integrator;
pub mod interp;
pub mod io;
pub mod inverse;
pub mod linalg;
pub mod metrics;
pub mod params;
pub mod pod;
pub mod rom;
pub mod scalar;
pub mod solver;
pub mod study;
pub mod windkessel;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Scenario = config::Scenario<f64>;
pub type Model = solver::CoupledModel<f64>;
pub type Trajectory = solver::Trajectory<f64>;
pub type Snapshots = pod::SnapshotMatrix<f64>;
pub type Basis = pod::ProjectionBasis<f64>;
pub type Parameters = params::ParameterSet<f64>;
pub type Library = interp::SampleLibrary<f64>;
pub type LmTrace = inverse::LmTrace<f64>;
