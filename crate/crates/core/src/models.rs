//! Planet, atmosphere, vehicle and dispersion models.
//!
//! All quantities are SI. Dispersions are fractional multipliers held fixed
//! over a run: a density deviation of `+0.2` means the truth atmosphere is
//! 20% denser than the onboard exponential model at every altitude.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spherical, non-rotating planet with an exponential atmosphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanetModel {
    /// Gravitational parameter [m³/s²]
    pub mu: f64,
    /// Reference radius, also the zero of altitude [m]
    pub r_ref: f64,
    /// Density at the reference radius [kg/m³]
    pub rho0: f64,
    /// Atmospheric scale height [m]
    pub h_s: f64,
}

impl PlanetModel {
    /// Mars constants used by the default scenario.
    pub const MARS: PlanetModel = PlanetModel {
        mu: 4.2828e13,
        r_ref: 3_397_000.0,
        rho0: 0.0158,
        h_s: 9354.5,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mu", self.mu),
            ("r_ref", self.r_ref),
            ("rho0", self.rho0),
            ("h_s", self.h_s),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "planet {name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Altitude above the reference radius.
    #[inline]
    pub fn altitude(&self, r: f64) -> f64 {
        r - self.r_ref
    }
}

/// Point-mass vehicle with constant nominal aerodynamic coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleModel {
    /// Mass [kg]
    pub m: f64,
    /// Reference area [m²]
    pub s: f64,
    /// Nominal lift coefficient
    pub cl0: f64,
    /// Nominal drag coefficient
    pub cd0: f64,
}

impl VehicleModel {
    /// Builds a vehicle from its ballistic coefficient `β = m / (C_D S)` and
    /// lift-to-drag ratio.
    pub fn from_ballistic(m: f64, s: f64, beta: f64, lift_to_drag: f64) -> Result<Self> {
        if !(beta > 0.0 && s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ballistic coefficient and area must be positive (beta={beta}, S={s})"
            )));
        }
        let cd0 = m / (beta * s);
        let v = VehicleModel {
            m,
            s,
            cl0: lift_to_drag * cd0,
            cd0,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.s > 0.0 && self.cd0 > 0.0 && self.cl0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "vehicle requires m > 0, S > 0, CD0 > 0, CL0 >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn lift_to_drag(&self) -> f64 {
        self.cl0 / self.cd0
    }

    pub fn ballistic_coefficient(&self) -> f64 {
        self.m / (self.cd0 * self.s)
    }
}

/// The onboard-known planet and vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub planet: PlanetModel,
    pub vehicle: VehicleModel,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        self.planet.validate()?;
        self.vehicle.validate()
    }
}

/// Fractional deviations of the truth plant from the onboard model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DispersionSet {
    pub dm_frac: f64,
    pub drho_frac: f64,
    #[serde(rename = "dcl_frac")]
    pub d_cl_frac: f64,
    #[serde(rename = "dcd_frac")]
    pub d_cd_frac: f64,
}

impl DispersionSet {
    pub const NOMINAL: DispersionSet = DispersionSet {
        dm_frac: 0.0,
        drho_frac: 0.0,
        d_cl_frac: 0.0,
        d_cd_frac: 0.0,
    };

    pub fn is_nominal(&self) -> bool {
        *self == Self::NOMINAL
    }
}

/// Exponential density at altitude `h`, scaled by `1 + drho_frac`.
///
/// Negative altitudes are allowed; the exponential simply extrapolates.
#[inline]
pub fn atmospheric_density(h: f64, planet: &PlanetModel, drho_frac: f64) -> f64 {
    (1.0 + drho_frac) * planet.rho0 * (-h / planet.h_s).exp()
}

/// Inverse-square gravitational acceleration at radius `r`.
pub fn gravity(r: f64, planet: &PlanetModel) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("gravity requires r > 0, got {r}")));
    }
    Ok(planet.mu / (r * r))
}

/// Lift and drag accelerations for a (possibly dispersed) vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroAccels {
    pub lift: f64,
    pub drag: f64,
}

pub fn aero_accels(rho: f64, v: f64, vehicle: &VehicleModel, disp: &DispersionSet) -> Result<AeroAccels> {
    let mass = vehicle.m * (1.0 + disp.dm_frac);
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dispersed mass must be positive, got {mass}"
        )));
    }
    let q_over_m = 0.5 * rho * v * v * vehicle.s / mass;
    Ok(AeroAccels {
        lift: q_over_m * vehicle.cl0 * (1.0 + disp.d_cl_frac),
        drag: q_over_m * vehicle.cd0 * (1.0 + disp.d_cd_frac),
    })
}
