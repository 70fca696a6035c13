use serde::{Deserialize, Serialize};

use super::PressureLaw;
use crate::error::{Error, Result};

/// Density–flux pair `(ρ, q)` with `q = ρ v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasState {
    pub rho: f64,
    pub q: f64,
}

impl GasState {
    pub fn new(rho: f64, q: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::NonPositiveDensity(rho));
        }
        if !q.is_finite() {
            return Err(Error::NonFiniteState { rho, q });
        }
        Ok(GasState { rho, q })
    }

    pub fn from_velocity(rho: f64, v: f64) -> Result<Self> {
        Self::new(rho, rho * v)
    }

    pub fn at_rest(rho: f64) -> Result<Self> {
        Self::new(rho, 0.0)
    }

    pub fn velocity(&self) -> f64 {
        self.q / self.rho
    }

    /// Image under `x → −x`, `q → −q`.
    pub fn mirrored(&self) -> Self {
        GasState {
            rho: self.rho,
            q: -self.q,
        }
    }

    /// Physical flux `(q, q²/ρ + p(ρ))`.
    pub fn flux(&self, law: &PressureLaw) -> Result<[f64; 2]> {
        Ok([self.q, self.q * self.q / self.rho + law.pressure(self.rho)?])
    }

    pub fn eigenvalues(&self, law: &PressureLaw) -> Result<(f64, f64)> {
        let c = law.sound_speed(self.rho)?;
        let v = self.velocity();
        Ok((v - c, v + c))
    }

    /// `λ₁ < 0 < λ₂`, strictly.
    pub fn is_subsonic(&self, law: &PressureLaw) -> Result<bool> {
        let (l1, l2) = self.eigenvalues(law)?;
        Ok(l1 < 0.0 && 0.0 < l2)
    }

    pub(crate) fn require_subsonic(&self, law: &PressureLaw) -> Result<()> {
        if self.is_subsonic(law)? {
            Ok(())
        } else {
            Err(Error::NotSubsonic {
                rho: self.rho,
                q: self.q,
            })
        }
    }

    #[cfg(test)]
    pub(crate) fn max_abs_diff(&self, other: &GasState) -> f64 {
        (self.rho - other.rho).abs().max((self.q - other.q).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_vacuum_and_nan() {
        assert!(GasState::new(0.0, 1.0).is_err());
        assert!(GasState::new(-1.0, 0.0).is_err());
        assert!(GasState::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn eigenvalue_examples() {
        let law = PressureLaw::isentropic(1.0, 1.0).unwrap();
        let rest = GasState::at_rest(3.0).unwrap();
        assert_eq!(rest.eigenvalues(&law).unwrap(), (-1.0, 1.0));
        let moving = GasState::new(1.0, 0.5).unwrap();
        assert_eq!(moving.eigenvalues(&law).unwrap(), (-0.5, 1.5));
        let (l1, l2) = moving.eigenvalues(&law).unwrap();
        assert!(l1 < 0.0 && 0.0 < l2);
    }

    #[test]
    fn subsonic_examples() {
        let law = PressureLaw::isentropic(1.0, 1.0).unwrap();
        assert!(GasState::at_rest(0.3).unwrap().is_subsonic(&law).unwrap());
        assert!(!GasState::new(1.0, 2.0).unwrap().is_subsonic(&law).unwrap());
        // exactly sonic, v = c = 1
        assert!(!GasState::new(2.0, 2.0).unwrap().is_subsonic(&law).unwrap());
        assert!(!GasState::new(2.0, -2.0).unwrap().is_subsonic(&law).unwrap());
    }
}
