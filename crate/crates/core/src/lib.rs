//! Bistable optomechanical sideband cooling: mean-field branches, linear
//! stability, Gaussian second moments and a truncated master equation.

pub mod covariance;
pub mod liouville;
pub mod manifest;
pub mod meanfield;
pub mod ode;
pub mod params;
pub mod poly;
pub mod stability;

pub use meanfield::{BranchSet, DynLabel, MeanFieldBranch};
pub use params::{ParamError, ParamField, PhysParams, Units, TOLERANCES};
pub use stability::{BranchPolicy, OperatingPoint, StabilityReport};
