//! Open spin-1/2 XXZ chain with diagonal boundary fields in the massless
//! regime η = iγ: Bethe roots and holes, the non-linear integral equation
//! for the auxiliary function, the density function on the contour, and the
//! determinant and multiple-integral forms of the longitudinal generating
//! function, each checked against exact diagonalization.

pub mod bethe;
pub mod cli;
pub mod config;
pub mod correlators;
pub mod density;
pub mod ed_oracle;
pub mod error;
pub mod linalg;
pub mod model;
pub mod nlie;
pub mod verify;

pub use error::{Error, Result};
pub use model::{c64, ModelParams, Region, RegionLabel, C64};
