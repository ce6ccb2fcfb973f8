//! Adaptive view-angle selection for parallel-beam computed tomography.
//!
//! The next view is chosen by maximising an edge-alignment score computed
//! from the current reconstruction plus an angle-spacing term that repels
//! previously measured orientations. The crate contains everything needed to
//! run that loop against a simulated instrument:
//!
//! * [`phantom`] builds binary ground-truth volumes,
//! * [`projector`] is the slice-wise parallel-beam system matrix and its adjoint,
//! * [`measurement`] simulates Poisson transmission counts,
//! * [`recon`] is a weighted least-squares reconstructor with an edge-preserving prior,
//! * [`edges`] extracts Canny edges, Hough segments and the alignment score,
//! * [`selection`] combines alignment and spacing and also generates golden-ratio angles,
//! * [`workflow`] drives acquisition/reconstruction and tracks NRMSE.

pub mod edges;
pub mod error;
pub mod io;
pub mod measurement;
mod par;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod selection;
pub mod volume;
pub mod workflow;

pub use error::{Error, Result};
pub use volume::Volume;
