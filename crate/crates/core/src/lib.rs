//! Isentropic gas flow on pipe networks.
//!
//! The crate covers the pipe model (pressure laws, wave curves, exact Riemann
//! solver), network topology, junction coupling conditions, a first-order
//! Godunov finite-volume stepper, stationary profiles, boundary feedback
//! stabilization with discrete Lyapunov certification, and simple control
//! searches. Coupling conditions and boundary laws are trait objects looked
//! up by name in [`coupling::CouplingRegistry`] and
//! [`stabilization::BoundaryRegistry`].

pub mod control;
pub mod coupling;
mod error;
pub mod fv_solver;
pub mod gas_model;
pub mod network;
mod numerics;
pub mod scenario;
pub mod stabilization;
pub mod steady_state;

pub use error::{Error, Result};
pub use gas_model::{GasState, PressureLaw};

/// Standard gravity (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.81;
