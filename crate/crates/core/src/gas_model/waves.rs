//! Lax wave curves of the isentropic system.
//!
//! All curves are parameterized by the density increment `σ = ρ_new − ρ_base`.
//! The velocity change along a wave is expressed through
//! `φ(ρ; ρ_ref)`: the rarefaction integral `∫_{ρ_ref}^{ρ} c(s)/s ds` for
//! `ρ ≤ ρ_ref` and the Hugoniot branch `√((p−p_ref)(ρ−ρ_ref)/(ρ ρ_ref))`
//! for `ρ > ρ_ref`. `φ` is increasing and C¹ in `ρ`.

use serde::{Deserialize, Serialize};

use super::{GasState, PressureLaw};
use crate::error::{Error, Result};
use crate::numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    First,
    Second,
}

/// Velocity change along the rarefaction integral curve, `∫_{ρ_ref}^{ρ} c(s)/s ds`.
pub(crate) fn rarefaction_velocity_change(law: &PressureLaw, rho: f64, rho_ref: f64) -> Result<f64> {
    Ok(law.riemann_potential(rho)? - law.riemann_potential(rho_ref)?)
}

/// Magnitude of the velocity jump on the Hugoniot locus, `√((p−p_ref)(ρ−ρ_ref)/(ρ ρ_ref))`.
pub(crate) fn shock_velocity_jump(law: &PressureLaw, rho: f64, rho_ref: f64) -> Result<f64> {
    let dp = law.pressure(rho)? - law.pressure(rho_ref)?;
    Ok((dp * (rho - rho_ref) / (rho * rho_ref)).max(0.0).sqrt())
}

pub(crate) fn phi(law: &PressureLaw, rho: f64, rho_ref: f64) -> Result<f64> {
    if rho <= rho_ref {
        rarefaction_velocity_change(law, rho, rho_ref)
    } else {
        shock_velocity_jump(law, rho, rho_ref)
    }
}

/// `∂φ/∂ρ`.
pub(crate) fn phi_derivative(law: &PressureLaw, rho: f64, rho_ref: f64) -> Result<f64> {
    let c = law.sound_speed(rho)?;
    if rho <= rho_ref || (rho - rho_ref).abs() <= 1e-9 * rho_ref {
        return Ok(c / rho);
    }
    let p = law.pressure(rho)?;
    let p_ref = law.pressure(rho_ref)?;
    let dp = p - p_ref;
    let dr = rho - rho_ref;
    let g = dp * dr / (rho * rho_ref);
    let dg = (c * c * dr + dp) / (rho * rho_ref) - dp * dr / (rho * rho * rho_ref);
    Ok(dg / (2.0 * g.sqrt()))
}

fn shifted_density(base: &GasState, sigma: f64) -> Result<f64> {
    let rho = base.rho + sigma;
    if rho > 0.0 && rho.is_finite() {
        Ok(rho)
    } else {
        Err(Error::CurveOutOfRange { sigma })
    }
}

/// State at parameter `σ` on the forward `family` wave curve through `base`:
/// the set of right states reachable from the left state `base` by one wave.
///
/// 1-family: `σ < 0` rarefaction, `σ > 0` shock. 2-family: `σ > 0`
/// rarefaction, `σ < 0` shock.
pub fn lax_curve(base: &GasState, sigma: f64, family: Family, law: &PressureLaw) -> Result<GasState> {
    law.isentropic_parameters("lax curves")?;
    if sigma == 0.0 {
        return Ok(*base);
    }
    let rho = shifted_density(base, sigma)?;
    let vb = base.velocity();
    let v = match family {
        Family::First => vb - phi(law, rho, base.rho)?,
        Family::Second => vb - phi(law, base.rho, rho)?,
    };
    GasState::from_velocity(rho, v)
}

/// State at parameter `σ` on the curve of left states that connect to the
/// right state `base` by a single 2-wave.
///
/// This is the set of admissible traces at the `x = 0` end of a pipe whose
/// first cell holds `base`: the wave enters the pipe, nothing leaves it.
/// Equal to the mirror image of the forward 1-curve through the mirrored base.
pub fn trace_curve(base: &GasState, sigma: f64, law: &PressureLaw) -> Result<GasState> {
    law.isentropic_parameters("trace curves")?;
    if sigma == 0.0 {
        return Ok(*base);
    }
    let rho = shifted_density(base, sigma)?;
    GasState::from_velocity(rho, base.velocity() + phi(law, rho, base.rho)?)
}

/// Density range `(ρ_lo, ρ_hi)` of strictly subsonic states on the trace curve through `base`.
pub(crate) fn subsonic_trace_interval(base: &GasState, law: &PressureLaw) -> Result<(f64, f64)> {
    base.require_subsonic(law)?;
    let margin = |rho: f64| -> Result<f64> {
        let s = trace_curve(base, rho - base.rho, law)?;
        let c = law.sound_speed(s.rho)?;
        Ok(c - s.velocity().abs())
    };
    let mut lower = base.rho;
    let mut lo_out = base.rho * 0.5;
    let mut found_lo = false;
    for _ in 0..200 {
        if !matches!(margin(lo_out), Ok(m) if m > 0.0) {
            found_lo = true;
            break;
        }
        lower = lo_out;
        lo_out *= 0.5;
    }
    let rho_lo = if found_lo {
        numerics::boundary_of("subsonic lower bound", margin, lower, lo_out)?
    } else {
        lo_out
    };
    let mut upper = base.rho;
    let mut hi_out = base.rho * 2.0;
    for _ in 0..200 {
        if !matches!(margin(hi_out), Ok(m) if m > 0.0) {
            let rho_hi = numerics::boundary_of("subsonic upper bound", margin, upper, hi_out)?;
            return Ok((rho_lo, rho_hi));
        }
        upper = hi_out;
        hi_out *= 2.0;
    }
    Err(Error::BracketFailure {
        what: "subsonic upper bound",
        lo: base.rho,
        hi: hi_out,
    })
}

/// The strictly subsonic part of the trace curve through `base`, with the
/// density range cached so repeated solves along it stay cheap.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SubsonicTrace<'a> {
    base: GasState,
    law: &'a PressureLaw,
    lo: f64,
    hi: f64,
}

impl<'a> SubsonicTrace<'a> {
    pub(crate) fn new(base: &GasState, law: &'a PressureLaw) -> Result<Self> {
        let (rho_lo, rho_hi) = subsonic_trace_interval(base, law)?;
        let inset = 1e-12 * (rho_hi - rho_lo);
        Ok(SubsonicTrace {
            base: *base,
            law,
            lo: rho_lo + inset,
            hi: rho_hi - inset,
        })
    }

    pub(crate) fn state(&self, rho: f64) -> Result<GasState> {
        trace_curve(&self.base, rho - self.base.rho, self.law)
    }

    /// Subsonic state on the curve where `relation` vanishes.
    pub(crate) fn solve<F>(&self, what: &'static str, mut relation: F) -> Result<GasState>
    where
        F: FnMut(&GasState) -> f64,
    {
        let mut g = |rho: f64| -> Result<f64> { Ok(relation(&self.state(rho)?)) };
        let g_b = g(self.base.rho)?;
        if g_b == 0.0 {
            return Ok(self.base);
        }
        let (g_lo, g_hi) = (g(self.lo)?, g(self.hi)?);
        if g_lo == 0.0 {
            return self.state(self.lo);
        }
        if g_hi == 0.0 {
            return self.state(self.hi);
        }
        let (a, b) = if g_lo.signum() != g_b.signum() {
            (self.lo, self.base.rho)
        } else if g_b.signum() != g_hi.signum() {
            (self.base.rho, self.hi)
        } else {
            return Err(Error::BracketFailure {
                what,
                lo: self.lo,
                hi: self.hi,
            });
        };
        let rho = numerics::brent(what, g, a, b, 0.0, 200)?;
        self.state(rho)
    }

    /// Subsonic state on the curve carrying mass flux `q`.
    pub(crate) fn with_flux(&self, what: &'static str, q: f64) -> Result<GasState> {
        if self.base.q == q {
            return Ok(self.base);
        }
        // pin the flux exactly so that mass balances hold to roundoff in ρ only
        let s = self.solve(what, |s| s.q - q)?;
        Ok(GasState { rho: s.rho, q })
    }

    /// Mass flux range `(q_lo, q_hi)` over the subsonic part of the curve.
    pub(crate) fn flux_range(&self) -> Result<(f64, f64)> {
        // q is flat at the sonic ends; pull in so every flux in range is reachable
        let (a, b) = (self.state(self.lo)?.q, self.state(self.hi)?.q);
        let w = 1e-9 * (b - a).abs();
        Ok((a + w, b - w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent Rankine–Hugoniot oracle: for the given left state and right
    /// density, find the right velocity satisfying both jump relations with a
    /// Lax-admissible 2-shock (λ₂(R) < s < λ₂(L)) by scalar bisection.
    fn rh_two_shock_oracle(left: &GasState, rho_r: f64, law: &PressureLaw) -> GasState {
        let momentum_flux = |s: &GasState| s.q * s.q / s.rho + law.pressure(s.rho).unwrap();
        let mismatch = |v_r: f64| {
            let right = GasState { rho: rho_r, q: rho_r * v_r };
            let s = (right.q - left.q) / (right.rho - left.rho);
            s * (right.q - left.q) - (momentum_flux(&right) - momentum_flux(left))
        };
        // A 2-shock with ρ_R < ρ_L lowers the velocity; scan downward for a sign change.
        let vl = left.velocity();
        let (mut a, mut b) = (vl - 1e-9, vl - 10.0);
        let n = 20000;
        let mut prev = mismatch(a);
        for k in 1..=n {
            let x = vl - 1e-9 - 10.0 * k as f64 / n as f64;
            let cur = mismatch(x);
            if cur.signum() != prev.signum() {
                a = x + 10.0 / n as f64;
                b = x;
                break;
            }
            prev = cur;
        }
        let fa = mismatch(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if mismatch(m).signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        GasState { rho: rho_r, q: rho_r * 0.5 * (a + b) }
    }

    #[test]
    fn sigma_zero_is_identity() {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let base = GasState::new(1.2, 0.3).unwrap();
        for fam in [Family::First, Family::Second] {
            assert_eq!(lax_curve(&base, 0.0, fam, &law).unwrap(), base);
        }
        assert_eq!(trace_curve(&base, 0.0, &law).unwrap(), base);
    }

    #[test]
    fn two_shock_matches_rankine_hugoniot_oracle() {
        let law = PressureLaw::isentropic(1.0, 2.0).unwrap();
        let left = GasState::new(2.0, 0.4).unwrap();
        let rho_r = 1.3;
        let right = rh_two_shock_oracle(&left, rho_r, &law);
        let on_curve = lax_curve(&left, rho_r - left.rho, Family::Second, &law).unwrap();
        assert_relative_eq!(on_curve.rho, right.rho, max_relative = 1e-14);
        assert_relative_eq!(on_curve.q, right.q, epsilon = 1e-10);
        // Lax admissibility of the oracle root
        let s = (right.q - left.q) / (right.rho - left.rho);
        assert!(right.eigenvalues(&law).unwrap().1 < s && s < left.eigenvalues(&law).unwrap().1);
    }

    #[test]
    fn one_rarefaction_keeps_riemann_invariant() {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let base = GasState::new(1.5, 0.2).unwrap();
        let invariant = |s: &GasState| {
            let c = law.sound_speed(s.rho).unwrap();
            s.velocity() + 2.0 * c / (1.4 - 1.0)
        };
        let w0 = invariant(&base);
        for sigma in [-0.01, -0.1, -0.5, -1.0, -1.4] {
            let s = lax_curve(&base, sigma, Family::First, &law).unwrap();
            assert!((invariant(&s) - w0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_curve_mirrors_first_family() {
        let law = PressureLaw::isentropic(0.8, 1.0).unwrap();
        let base = GasState::new(1.1, -0.25).unwrap();
        for sigma in [-0.5, -0.05, 0.05, 0.7] {
            let a = trace_curve(&base, sigma, &law).unwrap();
            let b = lax_curve(&base.mirrored(), sigma, Family::First, &law).unwrap().mirrored();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn curve_rejects_vanishing_density() {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let base = GasState::new(1.0, 0.0).unwrap();
        assert!(matches!(
            lax_curve(&base, -1.0, Family::First, &law),
            Err(Error::CurveOutOfRange { .. })
        ));
        let z = PressureLaw::zfactor(1.0, -0.2).unwrap();
        assert!(matches!(
            lax_curve(&base, 0.1, Family::First, &z),
            Err(Error::RequiresIsentropic(_))
        ));
    }

    #[test]
    fn phi_derivative_matches_finite_difference() {
        for gamma in [1.0, 1.4, 2.0, 3.0] {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            for (rho, r) in [(0.7, 1.0), (1.6, 1.0), (2.5, 0.4)] {
                let h = 1e-6;
                let fd = (phi(&law, rho + h, r).unwrap() - phi(&law, rho - h, r).unwrap()) / (2.0 * h);
                assert_relative_eq!(phi_derivative(&law, rho, r).unwrap(), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn subsonic_interval_brackets_sonic_points() {
        let law = PressureLaw::isentropic(1.0, 1.0).unwrap();
        let base = GasState::new(1.0, 0.2).unwrap();
        let (lo, hi) = subsonic_trace_interval(&base, &law).unwrap();
        let at_lo = trace_curve(&base, lo - base.rho, &law).unwrap();
        let at_hi = trace_curve(&base, hi - base.rho, &law).unwrap();
        assert!((at_lo.velocity() + 1.0).abs() < 1e-9);
        assert!((at_hi.velocity() - 1.0).abs() < 1e-9);
    }

    proptest! {
        // Shock and rarefaction branches have second-order contact at σ = 0:
        // their difference is O(σ³), so halving σ divides it by about 8.
        #[test]
        fn branches_agree_to_second_order(
            gamma in prop_oneof![Just(1.0), 1.05f64..3.0],
            rho in 0.3f64..3.0,
            s0 in 0.02f64..0.06,
        ) {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            let sigma = s0 * rho;
            let diff = |sig: f64| {
                let r = rho + sig;
                let rare = rarefaction_velocity_change(&law, r, rho).unwrap();
                let shock = shock_velocity_jump(&law, r, rho).unwrap();
                (rare - shock.copysign(sig)).abs()
            };
            let d1 = diff(sigma);
            let d2 = diff(sigma / 2.0);
            prop_assert!(d2 > 0.0);
            let ratio = d1 / d2;
            prop_assert!(ratio > 6.5 && ratio < 9.5, "ratio {}", ratio);
        }
    }
}
