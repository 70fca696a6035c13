//! Thermodynamics and wave structure of the isentropic Euler system.

mod energy;
mod law;
mod riemann;
mod state;
pub(crate) mod waves;

pub use energy::energy_pair;
pub use law::PressureLaw;
pub use riemann::{solve_riemann, RiemannSolution, Wave};
pub use state::GasState;
pub use waves::{lax_curve, trace_curve, Family};

/// `√p'(ρ)`.
pub fn sound_speed(law: &PressureLaw, rho: f64) -> crate::Result<f64> {
    law.sound_speed(rho)
}

/// Characteristic speeds `(v − c, v + c)`.
pub fn eigenvalues(state: &GasState, law: &PressureLaw) -> crate::Result<(f64, f64)> {
    state.eigenvalues(law)
}

pub fn is_subsonic(state: &GasState, law: &PressureLaw) -> crate::Result<bool> {
    state.is_subsonic(law)
}
