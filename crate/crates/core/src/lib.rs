//! Weighted geometry and stability of free-boundary surfaces in manifolds
//! with density.
//!
//! The crate is organised bottom-up:
//!
//! * [`ambient`]: flat ambient spaces with a log-density `psi` and an
//!   implicit boundary `{Phi >= 0}`; Bakry-Emery-Ricci and Perelman scalar
//!   curvatures, boundary normal and second fundamental form.
//! * [`surface`]: immersions, triangle meshes in parameter space and
//!   pointwise extrinsic geometry evaluated exactly from the chart.
//! * [`functionals`]: weighted area and volume, admissible variations and
//!   finite-difference checks of the first and second variation formulas.
//! * [`stability`]: P1 discretisation of the index form with its natural
//!   Robin boundary term, the f-Jacobi operator and spectra.
//! * [`theorems`]: identity, topology-bound, area-bound and rigidity checkers.
//! * [`scenario`]: config-driven scenario runner used by the `wstab` CLI.

pub mod ambient;
pub mod error;
pub mod expr;
pub mod functionals;
pub mod jet;
pub mod linalg;
pub mod quadrature;
pub mod scenario;
pub mod stability;
pub mod surface;
pub mod theorems;

#[cfg(test)]
mod testutil;

pub use error::{Result, WstabError};
