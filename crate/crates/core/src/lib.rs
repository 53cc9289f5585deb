//! Joint-limit avoiding passivity-based control for torque-controlled
//! manipulators.
//!
//! The feasible joint box is parametrized by unconstrained coordinates
//! `xi` through `q = q0 + delta * tanh(xi)`. Control laws that keep `xi`
//! bounded keep `q` strictly inside its limits. The crate provides the
//! manipulator model, the parametrization, the classical and parametrized
//! control laws, a fixed-step simulator and the run analysis used to check
//! the closed-loop guarantees numerically.

pub mod analysis;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod fuzz;
pub mod parametrization;
pub mod plot;
pub mod selftest;
pub mod simulation;
pub mod trace;

pub use error::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
