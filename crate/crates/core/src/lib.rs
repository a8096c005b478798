//! Low-rank quantum state tomography with Haar-random basis measurements.
//!
//! The crate covers the local rank-r chart of density matrices, classical and
//! quantum Fisher information in that chart, concentration bounds on the
//! number of random settings, count simulation, maximum-likelihood
//! reconstruction, and reproducible experiment runners that emit CSV.

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fisher;
pub mod linalg;
pub mod measurement;
pub mod qstate;
pub mod qubit;
pub mod rng;

pub use error::{Result, TomoError};

pub use fisher::{FisherKind, FisherMatrix, WeightMatrix};
pub use measurement::{CountsTable, MeasurementDesign, MeasurementSetting};
pub use qstate::{DensityMatrix, LocalParameters, ParamChart, ParamKind};
