//! Conservative solutions of the two-component Camassa-Holm system.
//!
//! Eulerian data `(u, rho, mu)` is mapped to Lagrangian coordinates, where the
//! equation becomes a semilinear system of ODEs on a Banach space. That system is
//! integrated with a fixed-step RK4 scheme whose nonlocal terms are evaluated in
//! linear time, and mapped back. Alongside the solver sits a characteristic
//! analysis that predicts, from the initial data alone, whether and when a
//! characteristic collapses.

// Checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod breaking;
pub mod commands;
pub mod config;
pub mod coords;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod interp;
pub mod kernel;
pub mod measures;
pub mod presets;

pub use error::{Error, Result};
pub use exec::Execution;
