//! Construction, verification and tomography of multimode continuous-variable
//! Gaussian cluster states.
//!
//! Quadratures are ordered `(x_1, .., x_M, p_1, .., p_M)` with `[x, p] = 2i`, so the
//! vacuum covariance is the identity.

// `!(x < tol)` checks are written that way so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod cluster;
pub mod error;
#[cfg(test)]
mod invariants;
pub mod io;
pub mod random;
pub mod state;
pub mod surface;
pub mod symplectic;
pub mod tomography;
pub mod witness;

pub use basis::{CrosstalkMatrix, ModeBasis};
pub use cluster::{ClusterGraph, NullifierRecord, NullifierSet};
pub use error::{Error, Result};
pub use state::{GaussianState, QuadratureForm};
pub use surface::{
    DetectionRun, ErrorEvent, ErrorKind, LayeredCode, LayeredState, SyndromeOperator,
};
pub use symplectic::{SymplecticForm, SymplecticSpectrum, Williamson};
pub use tomography::{MeasurementSetting, ReconstructionResult, TomographyDataset};
pub use witness::{Bipartition, WitnessRecord, WitnessReport};

pub use nalgebra::{DMatrix, DVector};
pub use symplectic::Complex64;
