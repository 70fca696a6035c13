use super::{GasState, PressureLaw};
use crate::error::Result;

/// Physical energy `η = q²/(2ρ) + P(ρ)` and its flux `Q = (η + p) q/ρ`.
pub fn energy_pair(state: &GasState, law: &PressureLaw) -> Result<(f64, f64)> {
    let internal = law.internal_energy(state.rho)?;
    let eta = 0.5 * state.q * state.q / state.rho + internal;
    let flux = (eta + law.pressure(state.rho)?) * state.velocity();
    Ok((eta, flux))
}
