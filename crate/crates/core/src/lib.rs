//! Fabrication sequence optimization for multi-axis additive manufacturing.
//!
//! A continuous pseudo-time field over a voxel component is projected into
//! `N` differentiable layers. Each layer's inherent-strain shrinkage is
//! simulated as an independent linear elastic solve, and the summed final
//! displacement enters a quadratic distortion measure. The field is then
//! optimized with MMA using adjoint sensitivities, subject to continuity
//! and equal layer volume constraints.

pub mod config;
pub mod constraints;
pub mod error;
pub mod fem;
pub mod grid;
pub mod io;
pub mod measures;
pub mod optimizer;
pub mod par;
pub mod process;
pub mod projection;
pub mod sensitivity;
pub mod timefield;

pub use error::{Error, Result};
