//! Equivariant graph neural operators for charged N-body dynamics.
//!
//! - [`geometry`]: geometric graphs, rigid transforms, center of mass
//! - [`nbody`]: Coulomb simulator producing ground-truth trajectories
//! - [`dataset`]: windowed samples and the `EGNODSET` file format
//! - [`egnn`]: the equivariant message-passing layer
//! - [`temporal`]: the equivariant temporal Fourier convolution
//! - [`model`]: the assembled operator, loss and metrics

pub mod container;
pub mod dataset;
pub mod egnn;
mod error;
pub mod geometry;
pub mod grid;
pub mod model;
pub mod nbody;
pub mod nn;
pub mod temporal;

pub use error::{CoreError, Result};
