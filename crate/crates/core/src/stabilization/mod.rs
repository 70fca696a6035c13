//! Boundary feedback laws, the diagonal upwind scheme with its discrete
//! Lyapunov function, and decay certification.

mod boundary;
mod diagonal;

pub use boundary::{
    feedback_ghost, BoundaryContext, BoundaryFactory, BoundaryLaw, BoundaryRegistry, PiFlow, PrescribedInflow,
    PrescribedPressure, Proportional, Wall,
};
pub use diagonal::{
    admissible_parameters, certify_decay, decay_rate, diagonal_step, discrete_lyapunov, max_discrete_gradient,
    Admissibility, CertifyOptions, DiagonalSystem, LyapunovReport, MuBoundRule,
};

use crate::error::{Error, Result};
use crate::fv_solver::NetworkState;
use crate::gas_model::GasState;

/// `Δx`-weighted ℓ² distance of `(ρ, q)` to per-pipe targets, summed over pipes.
pub fn l2_distance_to_target(state: &NetworkState, targets: &[Vec<GasState>]) -> Result<f64> {
    if targets.len() != state.grids.len() {
        return Err(Error::GridMismatch(format!(
            "{} target profiles for {} pipes",
            targets.len(),
            state.grids.len()
        )));
    }
    let mut sum = 0.0;
    for (grid, target) in state.grids.iter().zip(targets) {
        if grid.cells.len() != target.len() {
            return Err(Error::GridMismatch(format!(
                "pipe `{}` has {} cells, target has {}",
                grid.pipe_id,
                grid.cells.len(),
                target.len()
            )));
        }
        sum += grid.dx
            * grid
                .cells
                .iter()
                .zip(target)
                .map(|(u, t)| (u.rho - t.rho).powi(2) + (u.q - t.q).powi(2))
                .sum::<f64>();
    }
    Ok(sum.sqrt())
}
