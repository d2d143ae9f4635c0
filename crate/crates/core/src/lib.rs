//! Polynomial chaos least-squares approximations built from tensor-product
//! Gauss grids that are subsampled deterministically with QR column pivoting.
//!
//! The pipeline is:
//!
//! 1. pick a multi-index set ([`indexset`]),
//! 2. build a tensor Gauss grid and the weighted design matrix ([`tensorgrid`]),
//! 3. choose `n` rows of the design matrix ([`pivotselect`]),
//! 4. evaluate the model only at those rows, optionally prune the basis and
//!    solve a preconditioned least-squares problem ([`lstsq`]),
//! 5. post-process the expansion: moments and Sobol' indices ([`pce`]).
//!
//! [`workflow`] strings the steps together the way the command-line driver uses them.

pub mod error;
pub mod formats;
pub mod indexset;
pub mod lstsq;
pub mod models;
pub mod orthopoly;
pub mod pce;
pub mod pivotselect;
pub mod tensorgrid;
pub mod workflow;

pub use error::{Error, Result};
pub use indexset::{IndexKind, IndexSet, MultiIndex};
pub use lstsq::{PrunedSystem, SolveReport};
pub use models::{ExternalSource, Model, ModelSpec};
pub use orthopoly::{Family, GaussRule1D, Recurrence};
pub use pce::{PcExpansion, SobolReport};
pub use pivotselect::{PivotSelection, SelectionMethod, SubsampledSystem};
pub use tensorgrid::{DesignMatrix, TensorGrid};
