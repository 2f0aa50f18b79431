//! Leaf-level co-limited assimilation and Medlyn stomatal coupling at 25 °C.
//!
//! Partial pressures are in Pa, rates in µmol CO₂ m⁻² s⁻¹ and conductance in
//! mol m⁻² s⁻¹. Every function taking a generic [`Real`] can be evaluated with
//! [`crate::Dual`] to differentiate with respect to whichever input is seeded.

use serde::{Deserialize, Serialize};

use crate::dual::Real;
use crate::error::NumericsError;

/// Ratio of diffusivities of water vapour and CO₂.
pub const H2O_CO2_DIFFUSIVITY: f64 = 1.6;

/// Parameters of the leaf model. All values must be strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotoParams {
    /// Maximum carboxylation rate at 25 °C.
    pub vcmax25: f64,
    /// Maximum electron transport rate at 25 °C.
    pub jmax25: f64,
    /// Dark respiration at 25 °C.
    pub rd25: f64,
    /// CO₂ compensation point (Pa).
    pub gamma_star: f64,
    /// Michaelis-Menten constant for CO₂ (Pa).
    pub kc: f64,
    /// Michaelis-Menten constant for O₂ (Pa).
    pub ko: f64,
    /// Intercellular O₂ partial pressure (Pa).
    pub oi: f64,
    /// Ambient CO₂ partial pressure (Pa).
    pub ca: f64,
    /// Minimum stomatal conductance.
    pub g0: f64,
    /// Medlyn slope (dimensionless).
    pub g1: f64,
    /// Vapour pressure deficit (kPa).
    pub vpd: f64,
    /// Atmospheric pressure (Pa).
    pub pressure: f64,
}

impl Default for PhotoParams {
    fn default() -> Self {
        Self::for_vcmax(50.0)
    }
}

impl PhotoParams {
    /// Default operating point with Jmax and Rd scaled from `vcmax25`.
    pub fn for_vcmax(vcmax25: f64) -> Self {
        Self {
            vcmax25,
            jmax25: 1.67 * vcmax25,
            rd25: 0.015 * vcmax25,
            gamma_star: 4.275,
            kc: 40.49,
            ko: 27840.0,
            oi: 20900.0,
            ca: 40.0,
            g0: 0.01,
            g1: 4.0,
            vpd: 1.5,
            pressure: 101_325.0,
        }
    }

    /// Replace Vcmax only, leaving the other parameters untouched.
    pub fn with_vcmax(mut self, vcmax25: f64) -> Self {
        self.vcmax25 = vcmax25;
        self
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        let fields = [
            ("vcmax25", self.vcmax25),
            ("jmax25", self.jmax25),
            ("rd25", self.rd25),
            ("gamma_star", self.gamma_star),
            ("kc", self.kc),
            ("ko", self.ko),
            ("oi", self.oi),
            ("ca", self.ca),
            ("g0", self.g0),
            ("g1", self.g1),
            ("vpd", self.vpd),
            ("pressure", self.pressure),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(NumericsError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Effective Michaelis-Menten constant `kc (1 + oi/ko)`.
    pub fn kc_effective(&self) -> f64 {
        self.kc * (1.0 + self.oi / self.ko)
    }

    /// Medlyn prefactor `1.6 (1 + g1 / sqrt(vpd))`.
    pub fn medlyn_slope(&self) -> f64 {
        H2O_CO2_DIFFUSIVITY * (1.0 + self.g1 / self.vpd.sqrt())
    }

    /// Ambient CO₂ as a mole fraction (µmol mol⁻¹).
    pub fn ca_mole_fraction(&self) -> f64 {
        self.ca / self.pressure * 1e6
    }
}

/// Rubisco-limited rate.
pub fn rubisco_limited<T: Real>(ci: T, vcmax25: T, p: &PhotoParams) -> T {
    vcmax25 * (ci - p.gamma_star) / (ci + p.kc_effective())
}

/// Electron-transport-limited rate at saturating light (`j = jmax25`).
pub fn light_limited<T: Real>(ci: T, p: &PhotoParams) -> T {
    (ci - p.gamma_star) / (ci + 2.0 * p.gamma_star) * (p.jmax25 / 4.0)
}

/// Net assimilation `min(Ac, Aj) - Rd` with Vcmax supplied separately so it
/// can be the active differentiation variable.
pub fn assimilation_with<T: Real>(ci: T, vcmax25: T, p: &PhotoParams) -> T {
    let ac = rubisco_limited(ci, vcmax25, p);
    let aj = light_limited(ci, p);
    ac.min(aj) - p.rd25
}

/// Net assimilation at `ci` (Pa) using `p.vcmax25`.
pub fn assimilation(ci: f64, p: &PhotoParams) -> Result<f64, NumericsError> {
    if !(ci > 0.0) {
        return Err(NumericsError::NonPositiveCi(ci));
    }
    Ok(assimilation_with(ci, p.vcmax25, p))
}

/// Medlyn stomatal conductance for a given net assimilation. Negative
/// assimilation does not close the stomata below `g0`.
pub fn stomatal_conductance<T: Real>(an: T, p: &PhotoParams) -> T {
    an.max(T::constant(0.0)) * (p.medlyn_slope() / p.ca_mole_fraction()) + p.g0
}

/// CO₂ supply through the stomata for conductance `gs` at `ci`.
pub fn diffusion_supply<T: Real>(gs: T, ci: T, p: &PhotoParams) -> T {
    gs * (T::constant(p.ca) - ci) * (1e6 / (H2O_CO2_DIFFUSIVITY * p.pressure))
}

/// Residual of the coupled system: biochemical demand minus diffusive supply.
pub fn ci_residual<T: Real>(ci: T, vcmax25: T, p: &PhotoParams) -> T {
    let an = assimilation_with(ci, vcmax25, p);
    let gs = stomatal_conductance(an, p);
    an - diffusion_supply(gs, ci, p)
}
