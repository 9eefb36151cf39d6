//! Onboard drag dynamics: the drag rate and the second-order decomposition
//! `D̈ = f + g₀·u + Δ` with `u = cos σ`.
//!
//! Everything here is the *onboard* model: nominal planet and vehicle,
//! measured drag, no knowledge of dispersions. The unmodeled part `Δ` is
//! never computed analytically; [`delta_diagnostic`] measures it from a
//! logged truth run instead.

use serde::{Deserialize, Serialize};

use crate::dynamics::EntryState;
use crate::models::{aero_accels, atmospheric_density, gravity, DispersionSet, PlanetModel, VehicleModel};
use crate::sim::TrajectoryLog;
use crate::{Error, Result};

/// Rate term `Ċ_D⁰ / C_D⁰` of the nominal drag coefficient. Coefficients are
/// constant in this model, so the term and its derivative vanish.
const COEFF_RATE: f64 = 0.0;
const COEFF_RATE_DOT: f64 = 0.0;

/// Coarsest log stride accepted by [`delta_diagnostic`] [s].
pub const MAX_DIAGNOSTIC_DT: f64 = 0.1;

/// Drag-chain quantities evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragChainTerms {
    pub drag: f64,
    pub drag_rate: f64,
    /// Drift term of `D̈` [m/s⁴]
    pub f: f64,
    /// Control effectiveness of `u = cos σ` in `D̈` [m/s⁴]
    pub g0: f64,
    /// `Ċ_D⁰ / C_D⁰` [1/s]
    pub c: f64,
}

impl DragChainTerms {
    /// Whether `g0` is large enough for the guidance law to divide by.
    pub fn invertible(&self, g0_floor: f64) -> bool {
        self.g0.abs() >= g0_floor
    }
}

/// Bracketed factor of the drag-rate equation, `Ḋ/D` with δ = 0.
fn drag_log_rate(drag: f64, state: &EntryState, g: f64, planet: &PlanetModel) -> f64 {
    let sin_g = state.gamma.sin();
    -state.v * sin_g / planet.h_s - 2.0 * drag / state.v - 2.0 * g * sin_g / state.v + COEFF_RATE
}

fn check_speed(state: &EntryState) -> Result<()> {
    if state.v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "drag chain requires v > 0, got {}",
            state.v
        )))
    }
}

/// Onboard drag rate from measured drag and the nominal model.
pub fn drag_rate(drag: f64, state: &EntryState, planet: &PlanetModel) -> Result<f64> {
    check_speed(state)?;
    let g = gravity(state.r, planet)?;
    Ok(drag * drag_log_rate(drag, state, g, planet))
}

/// Onboard lift estimate: nominal vehicle in the nominal atmosphere at the
/// measured altitude and speed.
pub fn onboard_lift(state: &EntryState, planet: &PlanetModel, vehicle: &VehicleModel) -> Result<f64> {
    let rho = atmospheric_density(planet.altitude(state.r), planet, 0.0);
    Ok(aero_accels(rho, state.v, vehicle, &DispersionSet::NOMINAL)?.lift)
}

/// Drift `f` and control effectiveness `g0` of the second drag derivative.
///
/// `f` is obtained by differentiating `Ḋ = D·q` along the equations of
/// motion, `D̈ = Ḋ·q + D·q̇`, and moving the `L cos σ / v` part of `γ̇` into
/// `g0·u`.
pub fn f_and_g0(drag: f64, state: &EntryState, lift: f64, planet: &PlanetModel) -> Result<(f64, f64)> {
    check_speed(state)?;
    let EntryState { r, v, gamma, .. } = *state;
    let hs = planet.h_s;
    let g = gravity(r, planet)?;
    let (sin_g, cos_g) = gamma.sin_cos();

    let q = drag_log_rate(drag, state, g, planet);
    let drag_dot = drag * q;

    let v_dot = -drag - g * sin_g;
    let g_dot = -2.0 * g * v * sin_g / r;
    // γ̇ with the bank-dependent lift term removed
    let gamma_dot_free = -(g / v - v / r) * cos_g;

    let q_dot_free = -(v_dot * sin_g + v * cos_g * gamma_dot_free) / hs
        - 2.0 * (drag_dot * v - drag * v_dot) / (v * v)
        - 2.0 * (g_dot * sin_g + g * cos_g * gamma_dot_free) / v
        + 2.0 * g * sin_g * v_dot / (v * v)
        + COEFF_RATE_DOT;

    let f = drag_dot * q + drag * q_dot_free;
    let g0 = -(v / hs + 2.0 * g / v) * lift * drag * cos_g / v;
    Ok((f, g0))
}

/// Drift with the `v² cos²γ / (r h_s)` term sign-flipped, a common slip when
/// differentiating by hand. Kept only so the tests can show the
/// finite-difference oracle tells the two apart.
pub fn f_flipped_curvature(drag: f64, state: &EntryState, planet: &PlanetModel) -> Result<f64> {
    check_speed(state)?;
    let EntryState { r, v, gamma, .. } = *state;
    let hs = planet.h_s;
    let g = gravity(r, planet)?;
    let (sin_g, cos_g) = gamma.sin_cos();
    let (s2, c2) = (sin_g * sin_g, cos_g * cos_g);
    let c = COEFF_RATE;
    let d = drag;

    let first = (-v * sin_g / hs - 4.0 * d / v - 2.0 * g * sin_g / v + c)
        * (-v * sin_g / hs * d - 2.0 * d * d / v - 2.0 * g * sin_g / v * d + c * d);
    let bracket = (d * sin_g + g) / hs + (4.0 * g * s2 - 2.0 * g * c2) / r
        - (2.0 * d * d + 4.0 * d * g * sin_g + 2.0 * g * g * s2 - 2.0 * g * g * c2) / (v * v)
        + v * v * c2 / (r * hs)
        + COEFF_RATE_DOT;
    Ok(first + d * bracket)
}

/// Evaluates every onboard drag-chain term at a state.
pub fn onboard_terms(
    drag: f64,
    state: &EntryState,
    planet: &PlanetModel,
    vehicle: &VehicleModel,
) -> Result<DragChainTerms> {
    let lift = onboard_lift(state, planet, vehicle)?;
    let (f, g0) = f_and_g0(drag, state, lift, planet)?;
    Ok(DragChainTerms {
        drag,
        drag_rate: drag_rate(drag, state, planet)?,
        f,
        g0,
        c: COEFF_RATE,
    })
}

/// One sample of the measured model mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSample {
    pub t: f64,
    pub x1: f64,
    pub delta: f64,
}

/// Measures `Δ(t) = D̈_numeric − f − g0·u` along a logged truth run.
///
/// `D̈` comes from second differences of the logged drag. The command is
/// held over each step, so the centered difference at a knot sees the
/// average of the two adjacent commands. Only interior points with a
/// uniform stride on both sides are used.
pub fn delta_diagnostic(log: &TrajectoryLog) -> Result<Vec<DeltaSample>> {
    let rec = &log.records;
    if rec.len() < 3 {
        return Err(Error::Resolution(format!(
            "need at least 3 log points, got {}",
            rec.len()
        )));
    }
    let dt = rec[1].t - rec[0].t;
    if !(dt > 0.0 && dt <= MAX_DIAGNOSTIC_DT) {
        return Err(Error::Resolution(format!(
            "log stride {dt} s exceeds the {MAX_DIAGNOSTIC_DT} s limit for second differences"
        )));
    }
    let tol = 1e-9 * dt.max(1.0);
    let mut out = Vec::with_capacity(rec.len());
    for w in rec.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        if (h1 - dt).abs() > tol || (h2 - dt).abs() > tol {
            continue;
        }
        let ddot = (c.drag - 2.0 * b.drag + a.drag) / (dt * dt);
        let u = 0.5 * (a.u + b.u);
        out.push(DeltaSample {
            t: b.t,
            x1: b.x1,
            delta: ddot - b.f - b.g0 * u,
        });
    }
    if out.is_empty() {
        return Err(Error::Resolution("no uniformly spaced interior points".into()));
    }
    Ok(out)
}
