//! 2D axisymmetric eddy-current simulation of an electrodynamic levitation
//! device (a conducting plate above two concentric coils), weakly coupled to
//! a 1D rigid-body mechanical equation, with a POD reduced-order layer.
//!
//! The movement of the plate is handled by either of two strategies:
//! full-domain automatic remeshing, or vertical deformation of a fixed-topology
//! sub-domain mesh around the plate.

pub mod config;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod mor;
pub mod report;
pub mod sim;

pub use config::{Mode, Movement, SimConfig};
pub use error::{ConfigError, FemError, MeshError, MorError, SimError};
