//! Threshold-free cluster enhancement with exact merge-tree cluster sizes
//! and analytical Gaussian random field p-values.

pub mod cli;
pub mod cluster;
pub mod enhance;
pub mod error;
pub mod grf;
pub mod infer;
pub mod nifti;
pub mod perm;
pub mod quadrature;
pub mod sim;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{neighbors26, Dims, Mask3D, SubjectStack, Volume3D};
