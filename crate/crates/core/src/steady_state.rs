//! Stationary profiles of a single pipe.
//!
//! With `∂_t = 0` the flux `q` is constant and the density solves
//! `(c²(ρ) − q²/ρ²) ρ_x = −f q|q|/ρ − g sin(α) ρ`, integrated here with
//! classical RK4 on sub-cell steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas_model::{GasState, PressureLaw};
use crate::network::Pipe;
use crate::numerics::brent;

/// RK4 substeps per cell used by [`integrate_steady`].
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Smallest admitted `(c − |v|)/c` along a profile.
pub const SONIC_GUARD: f64 = 1e-6;

const RESIDUAL_SUBSTEPS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyProfile {
    pub q: f64,
    /// Cell centers.
    pub x: Vec<f64>,
    /// Density at the cell centers.
    pub rho: Vec<f64>,
    /// `min (c(ρ) − |v|)` over every RK node.
    pub subsonic_margin: f64,
    /// `ρ(0)`
    pub rho_start: f64,
    /// `ρ(L)`
    pub rho_end: f64,
}

impl SteadyProfile {
    /// Cell averages approximated by the center values.
    pub fn states(&self) -> Result<Vec<GasState>> {
        self.rho.iter().map(|&r| GasState::new(r, self.q)).collect()
    }
}

struct Ode<'a> {
    law: &'a PressureLaw,
    q: f64,
    friction: f64,
    gravity: f64,
}

impl Ode<'_> {
    /// `(c − |v|)/c` and `c − |v|`, failing inside the sonic guard.
    fn margin(&self, x: f64, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::NonPositiveDensity(rho));
        }
        let c = self.law.sound_speed(rho)?;
        let m = c - (self.q / rho).abs();
        if m / c < SONIC_GUARD {
            return Err(Error::SonicPoint { x, margin: m / c });
        }
        Ok(m)
    }

    fn rhs(&self, x: f64, rho: f64, slope: f64) -> Result<f64> {
        self.margin(x, rho)?;
        let c = self.law.sound_speed(rho)?;
        let v = self.q / rho;
        let num = -self.friction * self.q * self.q.abs() / rho - self.gravity * slope.sin() * rho;
        Ok(num / (c * c - v * v))
    }

    /// `m` RK4 steps from `(x0, rho)` over `len`; returns the end density and the smallest margin seen.
    fn advance(&self, x0: f64, rho: f64, len: f64, m: usize, slope: f64) -> Result<(f64, f64)> {
        let h = len / m as f64;
        let mut r = rho;
        let mut margin = f64::INFINITY;
        for k in 0..m {
            let x = x0 + k as f64 * h;
            let k1 = self.rhs(x, r, slope)?;
            let k2 = self.rhs(x + 0.5 * h, r + 0.5 * h * k1, slope)?;
            let k3 = self.rhs(x + 0.5 * h, r + 0.5 * h * k2, slope)?;
            let k4 = self.rhs(x + h, r + h * k3, slope)?;
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            margin = margin.min(self.margin(x + h, r)?);
        }
        Ok((r, margin))
    }
}

/// Stationary profile from `ρ(0) = rho_at_0` and flux `q`, with
/// [`DEFAULT_SUBSTEPS`] RK4 steps per cell.
pub fn integrate_steady(pipe: &Pipe, gravity: f64, rho_at_0: f64, q: f64) -> Result<SteadyProfile> {
    integrate_steady_with(pipe, gravity, rho_at_0, q, DEFAULT_SUBSTEPS)
}

/// As [`integrate_steady`] with `substeps` (even, at least 4) RK4 steps per cell.
pub fn integrate_steady_with(
    pipe: &Pipe,
    gravity: f64,
    rho_at_0: f64,
    q: f64,
    substeps: usize,
) -> Result<SteadyProfile> {
    if substeps < 4 || substeps % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "substeps per cell must be even and at least 4, got {substeps}"
        )));
    }
    if pipe.n_cells == 0 || !(pipe.length > 0.0) || pipe.slope.len() != pipe.n_cells {
        return Err(Error::InvalidParameter(format!("pipe `{}` has no valid grid", pipe.id)));
    }
    let start = GasState::new(rho_at_0, q)?;
    start.require_subsonic(&pipe.law)?;
    let ode = Ode {
        law: &pipe.law,
        q,
        friction: pipe.friction,
        gravity,
    };
    let mut margin = ode.margin(0.0, rho_at_0)?;
    let dx = pipe.dx();
    let half = substeps / 2;
    let mut rho = rho_at_0;
    let mut centers = Vec::with_capacity(pipe.n_cells);
    let mut samples = Vec::with_capacity(pipe.n_cells);
    for i in 0..pipe.n_cells {
        let x0 = i as f64 * dx;
        let (mid, m1) = ode.advance(x0, rho, 0.5 * dx, half, pipe.slope[i])?;
        let (next, m2) = ode.advance(x0 + 0.5 * dx, mid, 0.5 * dx, half, pipe.slope[i])?;
        centers.push(pipe.cell_center(i));
        samples.push(mid);
        margin = margin.min(m1).min(m2);
        rho = next;
    }
    Ok(SteadyProfile {
        q,
        x: centers,
        rho: samples,
        subsonic_margin: margin,
        rho_start: rho_at_0,
        rho_end: rho,
    })
}

/// Largest density mismatch when each center value is carried to the next
/// center by a fine RK4 shot of the stationary balance.
pub fn steady_residual(profile: &SteadyProfile, pipe: &Pipe, gravity: f64) -> Result<f64> {
    if profile.rho.len() != pipe.n_cells {
        return Err(Error::GridMismatch(format!(
            "profile has {} samples, pipe `{}` has {} cells",
            profile.rho.len(),
            pipe.id,
            pipe.n_cells
        )));
    }
    let ode = Ode {
        law: &pipe.law,
        q: profile.q,
        friction: pipe.friction,
        gravity,
    };
    let dx = pipe.dx();
    let half = RESIDUAL_SUBSTEPS / 2;
    let mut worst: f64 = 0.0;
    for i in 0..pipe.n_cells.saturating_sub(1) {
        let x = profile.x[i];
        let (mid, _) = ode.advance(x, profile.rho[i], 0.5 * dx, half, pipe.slope[i])?;
        let (next, _) = ode.advance(x + 0.5 * dx, mid, 0.5 * dx, half, pipe.slope[i + 1])?;
        worst = worst.max((next - profile.rho[i + 1]).abs());
    }
    Ok(worst)
}

/// Profile with flux `q` whose outlet pressure `p(ρ(L))` equals `p_out`,
/// found by a root search for `ρ(0)` within `rho_bracket`.
pub fn steady_for_outlet_pressure(
    pipe: &Pipe,
    gravity: f64,
    q: f64,
    p_out: f64,
    rho_bracket: (f64, f64),
) -> Result<SteadyProfile> {
    let mismatch = |r0: f64| -> Result<f64> {
        let prof = integrate_steady(pipe, gravity, r0, q)?;
        Ok(pipe.law.pressure(prof.rho_end)? - p_out)
    };
    let scale = p_out.abs().max(1.0);
    let r0 = brent("outlet pressure match", mismatch, rho_bracket.0, rho_bracket.1, 1e-13 * scale, 200)?;
    integrate_steady(pipe, gravity, r0, q)
}
