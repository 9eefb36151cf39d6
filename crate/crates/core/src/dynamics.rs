//! Point-mass equations of motion over a non-rotating spherical planet.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::models::{aero_accels, atmospheric_density, gravity, DispersionSet, PlanetModel, VehicleModel};
use crate::{Error, Result};

/// Cosines below this magnitude are treated as the polar or vertical-flight singularity.
const COS_SINGULAR: f64 = 1e-12;

/// Six-state point-mass vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryState {
    /// Radial position [m]
    pub r: f64,
    /// Longitude, unwrapped [rad]
    pub lon: f64,
    /// Latitude [rad]
    pub lat: f64,
    /// Speed [m/s]
    pub v: f64,
    /// Flight path angle [rad]
    pub gamma: f64,
    /// Heading angle, measured from north towards east [rad]
    pub chi: f64,
}

/// Time derivatives of each [`EntryState`] field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub r: f64,
    pub lon: f64,
    pub lat: f64,
    pub v: f64,
    pub gamma: f64,
    pub chi: f64,
}

impl EntryState {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r > 0.0
            && self.v > 0.0
            && self.gamma.abs() < FRAC_PI_2
            && self.lat.abs() < FRAC_PI_2
            && [self.lon, self.chi].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "entry state outside its domain: {self:?}"
            )))
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.r, self.lon, self.lat, self.v, self.gamma, self.chi]
    }

    pub fn from_array(a: &[f64]) -> Self {
        EntryState {
            r: a[0],
            lon: a[1],
            lat: a[2],
            v: a[3],
            gamma: a[4],
            chi: a[5],
        }
    }

    /// Keeps heading in (-π, π]; longitude is left unwrapped.
    pub fn normalized(mut self) -> Self {
        self.chi = wrap_pi(self.chi);
        self
    }
}

impl StateDerivative {
    pub fn to_array(&self) -> [f64; 6] {
        [self.r, self.lon, self.lat, self.v, self.gamma, self.chi]
    }
}

fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Right-hand side of the six point-mass equations under bank angle `sigma`.
pub fn eom_rhs(
    state: &EntryState,
    sigma: f64,
    planet: &PlanetModel,
    vehicle: &VehicleModel,
    disp: &DispersionSet,
) -> Result<StateDerivative> {
    let EntryState {
        r, lat, v, gamma, chi, ..
    } = *state;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("speed must be positive, got {v}")));
    }
    let cos_lat = lat.cos();
    if cos_lat.abs() < COS_SINGULAR {
        return Err(Error::Domain("cos(latitude) = 0".into()));
    }
    let (sin_g, cos_g) = gamma.sin_cos();
    if cos_g.abs() < COS_SINGULAR {
        return Err(Error::Domain("cos(flight path angle) = 0".into()));
    }
    let g = gravity(r, planet).map_err(|e| Error::Domain(e.to_string()))?;
    let rho = atmospheric_density(planet.altitude(r), planet, disp.drho_frac);
    let aero = aero_accels(rho, v, vehicle, disp)?;
    let (sin_chi, cos_chi) = chi.sin_cos();
    let (sin_s, cos_s) = sigma.sin_cos();

    Ok(StateDerivative {
        r: v * sin_g,
        lon: v * cos_g * sin_chi / (r * cos_lat),
        lat: v * cos_g * cos_chi / r,
        v: -aero.drag - g * sin_g,
        gamma: aero.lift * cos_s / v - (g / v - v / r) * cos_g,
        chi: aero.lift * sin_s / (v * cos_g) + v * cos_g * sin_chi * lat.tan() / r,
    })
}

/// Surface arc-length rate, `v cos γ`.
#[inline]
pub fn downrange_rate(state: &EntryState) -> f64 {
    state.v * state.gamma.cos()
}

/// Specific mechanical energy `v²/2 − μ/r` [J/kg].
#[inline]
pub fn specific_energy(state: &EntryState, planet: &PlanetModel) -> f64 {
    0.5 * state.v * state.v - planet.mu / state.r
}
