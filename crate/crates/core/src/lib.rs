//! Simulation and solution verification for mechanical systems whose
//! velocities are restricted by linear constraints.
//!
//! The crate covers the full pipeline:
//!
//! - [`calculus`]: charts, fields, finite-difference operators, fixed-step RK4;
//! - [`mechanics`]: mechanical Lagrangians/Hamiltonians, the Legendre map,
//!   semibasic forces, free and forced phase-space integration;
//! - [`nonholonomic`]: linear velocity constraints, reaction multipliers, and
//!   constrained integration;
//! - [`hamilton_jacobi`]: residual checks that decide whether a 1-form (or a
//!   velocity field) generates solutions of the dynamics by composition, plus
//!   the base-flow comparison test;
//! - [`caplygin`]: bundle structure, curvature, reduction to the base with a
//!   gyroscopic force, and lifting/projecting of verification candidates;
//! - [`models`]: the bundled example systems and their named candidates;
//! - [`config`] / [`runner`] / [`output`]: the file-driven front end used by
//!   the `nonholo` binary.
//!
//! Conventions: points are coordinate vectors in a fixed [`calculus::Chart`];
//! mass matrices are symmetric positive definite; constraint matrices act on
//! velocities row-wise; all file output is byte-deterministic for a fixed
//! configuration.

pub mod calculus;
pub mod caplygin;
pub mod config;
pub mod error;
pub mod hamilton_jacobi;
pub mod mechanics;
pub mod models;
pub mod nonholonomic;
pub mod output;
pub mod runner;

pub use error::{Error, Result};
