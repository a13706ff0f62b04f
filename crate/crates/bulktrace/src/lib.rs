//! Mixed-hybrid Bulk Trace FEM for level-set families of Kirchhoff beams (2D)
//! and Kirchhoff-Love shells (3D).
//!
//! A bulk mesh of the domain carries three fields: a C0 displacement, an
//! element-local moment tensor and a facet-local hybrid rotation. Moments are
//! condensed element by element, leaving a sparse SPD system in displacements
//! and rotations. Every integral carries the coarea weight `|grad phi|`, so a
//! single solve covers all level sets of the family at once.

pub mod analysis;
pub mod assembly;
pub mod bench;
pub mod error;
pub mod levelset;
pub mod mechanics;
pub mod mesh;
pub mod solve;
pub mod spaces;

pub use error::{BtError, Result};
