//! Two-dimensional smoothed particle hydrodynamics for quasi-brittle solids.
//!
//! Particles carry a damaged linear-elastic stress; neighboring particles are
//! joined by pseudo-springs that lose stiffness as they stretch and sever on
//! failure, so cracks open between particles. The crate covers geometry
//! (lattice filling of polygons), neighbor search, constitutive and bond
//! damage, explicit dynamics, base excitation, and scene/snapshot I/O.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constitutive;
pub mod dynamics;
pub mod error;
pub mod excitation;
pub mod kernel;
pub mod lattice;
pub mod neighbors;
pub mod output;
pub mod scene;
pub mod springs;
pub mod tensor;

pub use dynamics::Simulation;
pub use error::{Error, ErrorClass, Result};
