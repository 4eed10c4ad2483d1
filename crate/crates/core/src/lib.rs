//! Kinematics of micro-structured continua on discretized bodies.
//!
//! The body is a trivial bundle `ℝⁿ × ℝ³` over a box grid, the ambient space is
//! `𝔼 × ℝ³` in holonomic coordinates. Placements are pulled back to obtain the
//! material connection, solder form and pseudo-metric, and the resulting
//! frame invariants are checked against the generalized Galilean group.

pub mod ambient;
pub mod body;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod holonomy;
pub mod invariance;
pub mod placement;
pub mod pullback;
pub mod scenario;

pub use error::{Error, Result};
