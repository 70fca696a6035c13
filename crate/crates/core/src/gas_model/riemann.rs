use serde::{Deserialize, Serialize};

use super::waves::{phi, phi_derivative};
use super::{GasState, PressureLaw};
use crate::error::{Error, Result};

const VELOCITY_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Wave {
    Shock { speed: f64 },
    /// Fan between `head` (first characteristic, adjacent to the outer state)
    /// and `tail` (adjacent to the middle state). Zero width if the wave is trivial.
    Rarefaction { head: f64, tail: f64 },
}

impl Wave {
    pub fn is_shock(&self) -> bool {
        matches!(self, Wave::Shock { .. })
    }

    /// Smallest and largest speed covered by the wave.
    pub fn speed_range(&self) -> (f64, f64) {
        match *self {
            Wave::Shock { speed } => (speed, speed),
            Wave::Rarefaction { head, tail } => (head.min(tail), head.max(tail)),
        }
    }
}

/// Self-similar solution of a Riemann problem for the isentropic system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannSolution {
    pub left: GasState,
    pub right: GasState,
    pub middle: GasState,
    pub left_wave: Wave,
    pub right_wave: Wave,
    pub iterations: usize,
    law: PressureLaw,
}

impl RiemannSolution {
    /// The isentropic 2×2 system has no contact, so both middle states coincide.
    pub fn middle_left(&self) -> GasState {
        self.middle
    }

    pub fn middle_right(&self) -> GasState {
        self.middle
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    /// State on the ray `x/t = ξ`. Discontinuities are right-continuous:
    /// a ray that coincides with a shock returns the state behind it on the right.
    pub fn sample(&self, xi: f64) -> GasState {
        match self.left_wave {
            Wave::Shock { speed } if xi < speed => return self.left,
            Wave::Rarefaction { head, .. } if xi < head => return self.left,
            Wave::Rarefaction { head, tail } if xi < tail => {
                return self.fan_first(xi.clamp(head, tail));
            }
            _ => {}
        }
        match self.right_wave {
            Wave::Shock { speed } if xi < speed => self.middle,
            Wave::Shock { .. } => self.right,
            Wave::Rarefaction { tail, .. } if xi < tail => self.middle,
            Wave::Rarefaction { tail, head } if xi < head => self.fan_second(xi.clamp(tail, head)),
            Wave::Rarefaction { .. } => self.right,
        }
    }

    // Inside a 1-fan: v − c = ξ and v + potential(ρ) = v_L + potential(ρ_L).
    fn fan_first(&self, xi: f64) -> GasState {
        let law = &self.law;
        let w = self.left.velocity() + law.riemann_potential(self.left.rho).expect("valid left");
        fan_state(law, xi, w, 1.0).unwrap_or(self.middle)
    }

    // Inside a 2-fan: v + c = ξ and v − potential(ρ) = v_R − potential(ρ_R).
    fn fan_second(&self, xi: f64) -> GasState {
        let law = &self.law;
        let w = self.right.velocity() - law.riemann_potential(self.right.rho).expect("valid right");
        fan_state(law, xi, w, -1.0).unwrap_or(self.middle)
    }
}

/// Solves `v ∓ c = ξ`, `v ± potential = w` with `sign = +1` for the first family.
fn fan_state(law: &PressureLaw, xi: f64, w: f64, sign: f64) -> Result<GasState> {
    let (kappa, gamma) = law.isentropic_parameters("rarefaction fan")?;
    if gamma == 1.0 {
        let c = kappa.sqrt();
        let v = xi + sign * c;
        let rho = law.density_from_potential(sign * (w - v))?;
        GasState::from_velocity(rho, v)
    } else {
        // v = ξ ± c and ±(w − v) = 2c/(γ−1) ⇒ c = (γ−1)(±(w − ξ))/(γ+1)
        let c = (gamma - 1.0) * sign * (w - xi) / (gamma + 1.0);
        let rho = law.density_from_sound_speed(c)?;
        GasState::from_velocity(rho, xi + sign * c)
    }
}

/// Mismatch of the velocities reached from both sides at middle density `rho`.
fn mismatch(law: &PressureLaw, left: &GasState, right: &GasState, rho: f64) -> Result<f64> {
    Ok((phi(law, rho, left.rho)? + phi(law, rho, right.rho)?) + (right.velocity() - left.velocity()))
}

fn mismatch_derivative(law: &PressureLaw, left: &GasState, right: &GasState, rho: f64) -> Result<f64> {
    Ok(phi_derivative(law, rho, left.rho)? + phi_derivative(law, rho, right.rho)?)
}

/// Exact solution of the Riemann problem with data `left` | `right`.
///
/// The middle density is the root of the monotone velocity mismatch between
/// the forward 1-curve through `left` and the backward 2-curve through
/// `right`, found by Newton iteration safeguarded by a bisection bracket.
pub fn solve_riemann(left: &GasState, right: &GasState, law: &PressureLaw) -> Result<RiemannSolution> {
    let (_, gamma) = law.isentropic_parameters("riemann solver")?;
    let left = GasState::new(left.rho, left.q)?;
    let right = GasState::new(right.rho, right.q)?;

    let (rho_mid, iterations) = if left == right {
        (left.rho, 0)
    } else {
        if gamma > 1.0 {
            // The mismatch tends to −(2c_L + 2c_R)/(γ−1) + Δv as ρ → 0.
            let floor = -law.riemann_potential(left.rho)? - law.riemann_potential(right.rho)?
                + right.velocity()
                - left.velocity();
            if floor >= 0.0 {
                return Err(Error::Vacuum {
                    left_rho: left.rho,
                    right_rho: right.rho,
                });
            }
        }
        middle_density(law, &left, &right)?
    };

    // Average of both sides keeps mirrored problems exactly mirrored.
    let v_mid = 0.5
        * ((left.velocity() - phi(law, rho_mid, left.rho)?)
            + (right.velocity() + phi(law, rho_mid, right.rho)?));
    let middle = GasState::from_velocity(rho_mid, v_mid)?;

    let c_mid = law.sound_speed(rho_mid)?;
    let left_wave = if rho_mid > left.rho {
        Wave::Shock {
            speed: (middle.q - left.q) / (middle.rho - left.rho),
        }
    } else {
        Wave::Rarefaction {
            head: left.velocity() - law.sound_speed(left.rho)?,
            tail: v_mid - c_mid,
        }
    };
    let right_wave = if rho_mid > right.rho {
        Wave::Shock {
            speed: (right.q - middle.q) / (right.rho - middle.rho),
        }
    } else {
        Wave::Rarefaction {
            head: right.velocity() + law.sound_speed(right.rho)?,
            tail: v_mid + c_mid,
        }
    };

    Ok(RiemannSolution {
        left,
        right,
        middle,
        left_wave,
        right_wave,
        iterations,
        law: *law,
    })
}

fn middle_density(law: &PressureLaw, left: &GasState, right: &GasState) -> Result<(f64, usize)> {
    let f = |rho: f64| mismatch(law, left, right, rho);
    let mut lo = left.rho.min(right.rho);
    let mut hi = left.rho.max(right.rho);
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    let mut expansions = 0;
    while f_lo > 0.0 {
        hi = lo;
        f_hi = f_lo;
        lo *= 0.5;
        f_lo = f(lo)?;
        expansions += 1;
        if expansions > 2000 || lo < f64::MIN_POSITIVE {
            return Err(Error::Vacuum {
                left_rho: left.rho,
                right_rho: right.rho,
            });
        }
    }
    while f_hi < 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi)?;
        expansions += 1;
        if expansions > 2000 {
            return Err(Error::BracketFailure {
                what: "riemann middle density",
                lo,
                hi,
            });
        }
    }
    if f_lo == 0.0 {
        return Ok((lo, 0));
    }
    if f_hi == 0.0 {
        return Ok((hi, 0));
    }

    let mut rho = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let val = f(rho)?;
        residual = val.abs();
        if val < 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        if residual <= VELOCITY_TOL {
            // one extra Newton correction polishes the root to round-off
            let d = mismatch_derivative(law, left, right, rho)?;
            let polished = rho - val / d;
            if polished > lo && polished < hi && f(polished)?.abs() <= residual {
                rho = polished;
            }
            return Ok((rho, it));
        }
        let d = mismatch_derivative(law, left, right, rho)?;
        let newton = rho - val / d;
        rho = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok((rho, it));
        }
    }
    Err(Error::NoConvergence {
        what: "riemann middle density",
        iterations: MAX_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn momentum_flux(s: &GasState, law: &PressureLaw) -> f64 {
        s.q * s.q / s.rho + law.pressure(s.rho).unwrap()
    }

    #[test]
    fn equal_states_give_constant_solution() {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let u = GasState::new(1.3, 0.4).unwrap();
        let sol = solve_riemann(&u, &u, &law).unwrap();
        for xi in [-100.0, -1.0, 0.0, 0.3, 50.0] {
            assert_eq!(sol.sample(xi), u);
        }
    }

    /// Bisection oracle on the 1-shock branch alone: the symmetric collision
    /// has v* = 0, so ρ* solves v − √((p(ρ)−p(ρ₀))(ρ−ρ₀)/(ρρ₀)) = 0.
    fn collision_oracle(rho0: f64, v: f64, law: &PressureLaw) -> f64 {
        let g = |r: f64| {
            let dp = law.pressure(r).unwrap() - law.pressure(rho0).unwrap();
            v - (dp * (r - rho0) / (r * rho0)).sqrt()
        };
        let (mut a, mut b) = (rho0, rho0 * 16.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn symmetric_collision() {
        for gamma in [1.0, 1.4, 2.0, 3.0] {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            let l = GasState::from_velocity(1.0, 0.4).unwrap();
            let r = GasState::from_velocity(1.0, -0.4).unwrap();
            let sol = solve_riemann(&l, &r, &law).unwrap();
            assert!(sol.middle.velocity().abs() <= 1e-12);
            assert!(sol.middle.rho > 1.0);
            assert!(sol.left_wave.is_shock() && sol.right_wave.is_shock());
            assert_relative_eq!(sol.middle.rho, collision_oracle(1.0, 0.4, &law), max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_expansion() {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let l = GasState::from_velocity(1.0, -0.1).unwrap();
        let r = GasState::from_velocity(1.0, 0.1).unwrap();
        let sol = solve_riemann(&l, &r, &law).unwrap();
        assert!(sol.middle.velocity().abs() <= 1e-12);
        assert!(sol.middle.rho < 1.0);
        assert!(!sol.left_wave.is_shock() && !sol.right_wave.is_shock());
    }

    #[test]
    fn vacuum_detected() {
        let law = PressureLaw::isentropic(1.0, 2.0).unwrap();
        let l = GasState::from_velocity(1.0, -10.0).unwrap();
        let r = GasState::from_velocity(1.0, 10.0).unwrap();
        assert!(matches!(solve_riemann(&l, &r, &law), Err(Error::Vacuum { .. })));
    }

    #[test]
    fn fan_interior_is_continuous() {
        let law = PressureLaw::isentropic(0.5, 2.0).unwrap();
        let l = GasState::at_rest(2.0).unwrap();
        let r = GasState::at_rest(1.0).unwrap();
        let sol = solve_riemann(&l, &r, &law).unwrap();
        let Wave::Rarefaction { head, tail } = sol.left_wave else {
            panic!("dam break opens with a 1-rarefaction");
        };
        let at_head = sol.sample(head + 1e-13);
        let at_tail = sol.sample(tail - 1e-13);
        assert!(at_head.max_abs_diff(&l) < 1e-10);
        assert!(at_tail.max_abs_diff(&sol.middle) < 1e-10);
    }

    fn subsonic_state(gamma: f64) -> impl Strategy<Value = GasState> {
        (0.5f64..2.0, -0.9f64..0.9).prop_map(move |(rho, mach)| {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            let c = law.sound_speed(rho).unwrap();
            GasState::from_velocity(rho, mach * c).unwrap()
        })
    }

    fn gamma_choice() -> impl Strategy<Value = f64> {
        prop_oneof![Just(1.0), Just(1.4), Just(2.0), Just(3.0)]
    }

    proptest! {
        #[test]
        fn outer_rays_return_inputs(
            (gamma, l, r) in gamma_choice().prop_flat_map(|g| (Just(g), subsonic_state(g), subsonic_state(g)))
        ) {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            let sol = solve_riemann(&l, &r, &law).unwrap();
            prop_assert_eq!(sol.sample(-1e6), l);
            prop_assert_eq!(sol.sample(1e6), r);
            let (a, b) = sol.left_wave.speed_range();
            let (c, d) = sol.right_wave.speed_range();
            prop_assert!(a <= b && b <= c && c <= d);
        }

        #[test]
        fn shocks_satisfy_jump_and_entropy_conditions(
            (gamma, l, r) in gamma_choice().prop_flat_map(|g| (Just(g), subsonic_state(g), subsonic_state(g)))
        ) {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            let sol = solve_riemann(&l, &r, &law).unwrap();
            for (a, b, wave) in [(l, sol.middle, sol.left_wave), (sol.middle, r, sol.right_wave)] {
                if let Wave::Shock { speed } = wave {
                    prop_assert!((speed * (b.rho - a.rho) - (b.q - a.q)).abs() <= 1e-10);
                    let jump_m = momentum_flux(&b, &law) - momentum_flux(&a, &law);
                    prop_assert!((speed * (b.q - a.q) - jump_m).abs() <= 1e-10);
                    let (eta_a, qa) = crate::gas_model::energy_pair(&a, &law).unwrap();
                    let (eta_b, qb) = crate::gas_model::energy_pair(&b, &law).unwrap();
                    prop_assert!((qb - qa) - speed * (eta_b - eta_a) <= 1e-12);
                }
            }
        }

        #[test]
        fn mirrored_data_gives_mirrored_solution(
            (gamma, l, r) in gamma_choice().prop_flat_map(|g| (Just(g), subsonic_state(g), subsonic_state(g))),
            xi in -2.0f64..2.0,
        ) {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            let sol = solve_riemann(&l, &r, &law).unwrap();
            let mir = solve_riemann(&r.mirrored(), &l.mirrored(), &law).unwrap();
            let a = mir.sample(-xi).mirrored();
            let b = sol.sample(xi);
            // equal away from the discontinuities themselves
            let on_shock = [sol.left_wave, sol.right_wave]
                .iter()
                .any(|w| matches!(w, Wave::Shock { speed } if (speed - xi).abs() < 1e-9));
            if !on_shock {
                prop_assert!(a.max_abs_diff(&b) <= 1e-12, "{:?} vs {:?}", a, b);
            }
        }
    }
}
