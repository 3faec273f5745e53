//! Curvilinear structure enhancement for 2D images and 3D volumes.
//!
//! The core filter is the multiscale fractional anisotropy tensor
//! ([`mfat::enhance`]); a Frangi vesselness baseline, synthetic phantoms and
//! ROC/AUC scoring are provided alongside it.

pub mod baselines;
pub mod cli;
pub mod eigensym;
pub mod error;
pub mod evaluation;
pub mod imagecore;
pub mod mfat;
pub mod phantom;
pub mod scalespace;

pub use error::{Error, Result};
pub use imagecore::Image;
