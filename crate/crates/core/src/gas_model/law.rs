use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Barotropic pressure law `p(ρ)`.
///
/// The isentropic law `p = κ ρ^γ` supports the full wave machinery. The
/// affine z-factor law `p = RΘ (1 + α_z p) ρ`, solved in closed form for `p`,
/// only supports pressure, sound speed and eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureLaw {
    Isentropic { kappa: f64, gamma: f64 },
    #[serde(rename = "zfactor")]
    ZFactor { r_theta: f64, alpha_z: f64 },
}

impl PressureLaw {
    pub fn isentropic(kappa: f64, gamma: f64) -> Result<Self> {
        let law = PressureLaw::Isentropic { kappa, gamma };
        law.validate()?;
        Ok(law)
    }

    pub fn zfactor(r_theta: f64, alpha_z: f64) -> Result<Self> {
        let law = PressureLaw::ZFactor { r_theta, alpha_z };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PressureLaw::Isentropic { kappa, gamma } => {
                if !(kappa > 0.0 && kappa.is_finite()) {
                    return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
                }
                if !(1.0..=3.0).contains(&gamma) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must lie in [1, 3], got {gamma}"
                    )));
                }
            }
            PressureLaw::ZFactor { r_theta, alpha_z } => {
                if !(r_theta > 0.0 && r_theta.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "r_theta must be > 0, got {r_theta}"
                    )));
                }
                if !(alpha_z > -0.9 && alpha_z < 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha_z must lie in (-0.9, 0), got {alpha_z}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(κ, γ)` of an isentropic law.
    pub fn isentropic_parameters(&self, what: &'static str) -> Result<(f64, f64)> {
        match *self {
            PressureLaw::Isentropic { kappa, gamma } => Ok((kappa, gamma)),
            PressureLaw::ZFactor { .. } => Err(Error::RequiresIsentropic(what)),
        }
    }

    fn check_density(rho: f64) -> Result<()> {
        if rho > 0.0 && rho.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveDensity(rho))
        }
    }

    fn zfactor_denominator(r_theta: f64, alpha_z: f64, rho: f64) -> Result<f64> {
        let den = 1.0 - alpha_z * r_theta * rho;
        if den > 0.0 {
            Ok(den)
        } else {
            Err(Error::OutOfOperatingRange { rho })
        }
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        Self::check_density(rho)?;
        match *self {
            PressureLaw::Isentropic { kappa, gamma } => Ok(kappa * rho.powf(gamma)),
            PressureLaw::ZFactor { r_theta, alpha_z } => {
                let den = Self::zfactor_denominator(r_theta, alpha_z, rho)?;
                Ok(r_theta * rho / den)
            }
        }
    }

    /// `p'(ρ)`.
    pub fn pressure_derivative(&self, rho: f64) -> Result<f64> {
        Self::check_density(rho)?;
        match *self {
            PressureLaw::Isentropic { kappa, gamma } => {
                Ok(kappa * gamma * rho.powf(gamma - 1.0))
            }
            PressureLaw::ZFactor { r_theta, alpha_z } => {
                let den = Self::zfactor_denominator(r_theta, alpha_z, rho)?;
                Ok(r_theta / (den * den))
            }
        }
    }

    pub fn sound_speed(&self, rho: f64) -> Result<f64> {
        let dp = self.pressure_derivative(rho)?;
        if dp > 0.0 && dp.is_finite() {
            Ok(dp.sqrt())
        } else {
            Err(Error::NonHyperbolic { rho })
        }
    }

    /// Inverse of [`pressure`](Self::pressure).
    pub fn density_for_pressure(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("pressure must be > 0, got {p}")));
        }
        match *self {
            PressureLaw::Isentropic { kappa, gamma } => Ok((p / kappa).powf(1.0 / gamma)),
            PressureLaw::ZFactor { r_theta, alpha_z } => Ok(p / (r_theta * (1.0 + alpha_z * p))),
        }
    }

    /// Riemann potential `∫ c(s)/s ds`: `2c/(γ−1)` for `γ > 1`, `c ln ρ` for `γ = 1`.
    pub fn riemann_potential(&self, rho: f64) -> Result<f64> {
        Self::check_density(rho)?;
        let (kappa, gamma) = self.isentropic_parameters("riemann potential")?;
        if gamma == 1.0 {
            Ok(kappa.sqrt() * rho.ln())
        } else {
            Ok(2.0 * (kappa * gamma * rho.powf(gamma - 1.0)).sqrt() / (gamma - 1.0))
        }
    }

    /// Inverse of the Riemann potential.
    pub(crate) fn density_from_potential(&self, potential: f64) -> Result<f64> {
        let (kappa, gamma) = self.isentropic_parameters("riemann potential")?;
        if gamma == 1.0 {
            Ok((potential / kappa.sqrt()).exp())
        } else {
            let c = 0.5 * (gamma - 1.0) * potential;
            if c <= 0.0 {
                return Err(Error::NonPositiveDensity(0.0));
            }
            Ok((c * c / (kappa * gamma)).powf(1.0 / (gamma - 1.0)))
        }
    }

    /// Density with sound speed `c` (isentropic, `γ > 1`).
    pub(crate) fn density_from_sound_speed(&self, c: f64) -> Result<f64> {
        let (kappa, gamma) = self.isentropic_parameters("sound speed inversion")?;
        if c <= 0.0 || gamma == 1.0 {
            return Err(Error::NonPositiveDensity(0.0));
        }
        Ok((c * c / (kappa * gamma)).powf(1.0 / (gamma - 1.0)))
    }

    /// Specific enthalpy `h` with `h'(ρ) = p'(ρ)/ρ`, normalized as
    /// `κγρ^{γ−1}/(γ−1)` for `γ > 1` and `κ ln ρ` for `γ = 1`.
    pub fn enthalpy(&self, rho: f64) -> Result<f64> {
        Self::check_density(rho)?;
        let (kappa, gamma) = self.isentropic_parameters("enthalpy")?;
        if gamma == 1.0 {
            Ok(kappa * rho.ln())
        } else {
            Ok(kappa * gamma * rho.powf(gamma - 1.0) / (gamma - 1.0))
        }
    }

    /// Internal energy density `P(ρ)` of the energy pair.
    pub fn internal_energy(&self, rho: f64) -> Result<f64> {
        Self::check_density(rho)?;
        let (kappa, gamma) = self.isentropic_parameters("energy pair")?;
        if gamma == 1.0 {
            Ok(kappa * rho * rho.ln())
        } else {
            Ok(kappa * rho.powf(gamma) / (gamma - 1.0))
        }
    }
}
