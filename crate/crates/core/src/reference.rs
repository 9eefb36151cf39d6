//! Reference drag profile `D*(t)` with its first two derivatives.
//!
//! Profiles are produced by flying the nominal vehicle open loop under a
//! bank schedule tuned to hit the terminal altitude and downrange targets.
//! Sampling uses cubic Hermite interpolation on the stored drag and drag
//! rate; the second derivative is interpolated linearly.

use serde::{Deserialize, Serialize};

use crate::drag_chain::onboard_terms;
use crate::dynamics::{downrange_rate, eom_rhs, EntryState};
use crate::models::{aero_accels, atmospheric_density, DispersionSet, World};
use crate::sim::rk4_step;
use crate::{Error, Result};

/// Open-loop bank angle history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankSchedule {
    Constant {
        sigma: f64,
    },
    /// `sigma1` until `switch_time`, a linear ramp of length `ramp`, then
    /// `sigma2`.
    TwoSegment {
        sigma1: f64,
        sigma2: f64,
        switch_time: f64,
        ramp: f64,
    },
}

impl BankSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            BankSchedule::Constant { sigma } => sigma,
            BankSchedule::TwoSegment {
                sigma1,
                sigma2,
                switch_time,
                ramp,
            } => {
                if t <= switch_time {
                    sigma1
                } else if ramp <= 0.0 || t >= switch_time + ramp {
                    sigma2
                } else {
                    sigma1 + (sigma2 - sigma1) * (t - switch_time) / ramp
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let in_range = |s: f64| (0.0..=std::f64::consts::PI).contains(&s);
        let ok = match *self {
            BankSchedule::Constant { sigma } => in_range(sigma),
            BankSchedule::TwoSegment {
                sigma1, sigma2, ramp, ..
            } => in_range(sigma1) && in_range(sigma2) && ramp >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bank schedule outside [0, 180] deg: {self:?}"
            )))
        }
    }
}

/// Reference drag and derivatives at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReferenceSample {
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub knots: Vec<f64>,
    pub d_star: Vec<f64>,
    pub d_star_dot: Vec<f64>,
    pub d_star_ddot: Vec<f64>,
    /// Downrange flown by the reference [m]
    pub s_target: f64,
    /// Altitude at the terminal velocity [m]
    pub terminal_altitude: f64,
    /// Terminal velocity [m/s]
    pub terminal_velocity: f64,
    /// Schedule that generated the profile, if any
    pub schedule: Option<BankSchedule>,
}

impl ReferenceProfile {
    pub fn validate(&self) -> Result<()> {
        let n = self.knots.len();
        if n < 2 {
            return Err(Error::InvalidParameter("profile needs at least two knots".into()));
        }
        if [self.d_star.len(), self.d_star_dot.len(), self.d_star_ddot.len()]
            .iter()
            .any(|&m| m != n)
        {
            return Err(Error::InvalidParameter("profile columns differ in length".into()));
        }
        if self.knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("profile knots not strictly increasing".into()));
        }
        if !(self.s_target > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "profile s_target must be positive, got {}",
                self.s_target
            )));
        }
        Ok(())
    }

    /// A flat profile `D* ≡ c` on `[0, t_end]`.
    pub fn constant(c: f64, t_end: f64, s_target: f64) -> Self {
        ReferenceProfile {
            knots: vec![0.0, t_end],
            d_star: vec![c, c],
            d_star_dot: vec![0.0, 0.0],
            d_star_ddot: vec![0.0, 0.0],
            s_target,
            terminal_altitude: 0.0,
            terminal_velocity: 0.0,
            schedule: None,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.knots[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.knots.last().expect("validated profile has knots")
    }

    /// Hermite sample at `t`; outside the knot range the end value is held
    /// and both derivatives are zero.
    pub fn sample(&self, t: f64) -> ReferenceSample {
        let n = self.knots.len();
        if t < self.knots[0] {
            return ReferenceSample {
                d: self.d_star[0],
                ..Default::default()
            };
        }
        if t > self.knots[n - 1] {
            return ReferenceSample {
                d: self.d_star[n - 1],
                ..Default::default()
            };
        }
        let i = self.knots.partition_point(|&k| k <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (p0, p1) = (self.d_star[i], self.d_star[i + 1]);
        let (m0, m1) = (self.d_star_dot[i] * h, self.d_star_dot[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let d =
            (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1;
        let d_dot = ((6.0 * s2 - 6.0 * s) * p0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * p1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        let d_ddot = self.d_star_ddot[i] + s * (self.d_star_ddot[i + 1] - self.d_star_ddot[i]);
        ReferenceSample { d, d_dot, d_ddot }
    }
}

/// Nominal scenario and search settings for [`generate_reference`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub world: World,
    pub initial: EntryState,
    /// Terminal velocity [m/s]
    pub v_f: f64,
    /// Desired terminal altitude [m]
    pub h_f: f64,
    /// Desired downrange [m]
    pub s_desired: f64,
    pub dt: f64,
    pub max_time: f64,
    /// End of the first bank segment [s]
    pub switch_time: f64,
    /// Length of the linear bank transition [s]
    pub ramp: f64,
    /// Width (in knots, odd) of an optional moving average over `D̈*`; 1 keeps
    /// the exact values
    pub smoothing_window: usize,
}

/// Open-loop trajectory sampled at every integration step plus the
/// interpolated terminal instant.
#[derive(Debug, Clone)]
pub struct OpenLoopTrace {
    pub t: Vec<f64>,
    pub states: Vec<EntryState>,
    pub drag: Vec<f64>,
    pub downrange: Vec<f64>,
}

impl OpenLoopTrace {
    pub fn terminal(&self) -> (&EntryState, f64) {
        let i = self.t.len() - 1;
        (&self.states[i], self.downrange[i])
    }
}

fn drag_at(world: &World, disp: &DispersionSet, s: &EntryState) -> Result<f64> {
    let rho = atmospheric_density(world.planet.altitude(s.r), &world.planet, disp.drho_frac);
    Ok(aero_accels(rho, s.v, &world.vehicle, disp)?.drag)
}

/// Flies `schedule` open loop (bank held over each step) until `v ≤ v_f`.
pub fn propagate_open_loop(
    world: &World,
    disp: &DispersionSet,
    initial: &EntryState,
    schedule: &BankSchedule,
    dt: f64,
    max_time: f64,
    v_f: f64,
) -> Result<OpenLoopTrace> {
    initial.validate()?;
    let cap = (max_time / dt) as usize + 2;
    let mut trace = OpenLoopTrace {
        t: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        drag: Vec::with_capacity(cap),
        downrange: Vec::with_capacity(cap),
    };
    let mut y = [0.0; 7];
    y[..6].copy_from_slice(&initial.to_array());
    let mut t = 0.0;
    let mut step = 0usize;
    let push = |trace: &mut OpenLoopTrace, t: f64, y: &[f64; 7]| -> Result<()> {
        let st = EntryState::from_array(y);
        trace.t.push(t);
        trace.drag.push(drag_at(world, disp, &st)?);
        trace.states.push(st);
        trace.downrange.push(y[6]);
        Ok(())
    };
    push(&mut trace, t, &y)?;
    while t < max_time {
        let sigma = schedule.at(t);
        let next = rk4_step(
            |_, yy: &[f64; 7]| {
                let st = EntryState::from_array(yy);
                let d = eom_rhs(&st, sigma, &world.planet, &world.vehicle, disp)?;
                let a = d.to_array();
                Ok([a[0], a[1], a[2], a[3], a[4], a[5], downrange_rate(&st)])
            },
            t,
            &y,
            dt,
        )
        .map_err(|e| match e {
            Error::NonFinite { t, .. } => Error::NonFinite { step, t },
            Error::Domain(reason) => Error::DomainAt { t, reason },
            other => other,
        })?;
        if next[3] <= v_f {
            let frac = (y[3] - v_f) / (y[3] - next[3]);
            let mut yf = [0.0; 7];
            for i in 0..7 {
                yf[i] = y[i] + frac * (next[i] - y[i]);
            }
            yf[3] = v_f;
            let tf = t + frac * dt;
            if frac < 1e-9 {
                // terminal instant coincides with the last knot
                trace.t.pop();
                trace.states.pop();
                trace.drag.pop();
                trace.downrange.pop();
            }
            push(&mut trace, tf, &yf)?;
            return Ok(trace);
        }
        y = next;
        step += 1;
        t = step as f64 * dt;
        push(&mut trace, t, &y)?;
    }
    Err(Error::Reference(format!(
        "terminal velocity {v_f} m/s not reached within {max_time} s (v = {:.1} m/s)",
        y[3]
    )))
}

/// Centered moving average with the window truncated at the ends.
fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Builds the profile flown by a fixed schedule.
pub fn profile_from_schedule(spec: &ReferenceSpec, schedule: &BankSchedule) -> Result<ReferenceProfile> {
    schedule.validate()?;
    let trace = propagate_open_loop(
        &spec.world,
        &DispersionSet::NOMINAL,
        &spec.initial,
        schedule,
        spec.dt,
        spec.max_time,
        spec.v_f,
    )?;
    let n = trace.t.len();
    if n < 3 {
        return Err(Error::Reference("trajectory too short for a profile".into()));
    }
    let mut d_dot = Vec::with_capacity(n);
    let mut d_ddot = Vec::with_capacity(n);
    for ((&t, &d), st) in trace.t.iter().zip(&trace.drag).zip(&trace.states) {
        // zero dispersions: the onboard chain is exact along this trajectory
        let terms = onboard_terms(d, st, &spec.world.planet, &spec.world.vehicle)?;
        d_dot.push(terms.drag_rate);
        d_ddot.push(terms.f + terms.g0 * schedule.at(t).cos());
    }
    let d_ddot = moving_average(&d_ddot, spec.smoothing_window.max(1) | 1);
    let (terminal, s_final) = trace.terminal();
    let profile = ReferenceProfile {
        knots: trace.t.clone(),
        d_star: trace.drag.clone(),
        d_star_dot: d_dot,
        d_star_ddot: d_ddot,
        s_target: s_final,
        terminal_altitude: spec.world.planet.altitude(terminal.r),
        terminal_velocity: terminal.v,
        schedule: Some(*schedule),
    };
    profile.validate()?;
    Ok(profile)
}

/// Terminal altitude and downrange reached by a schedule.
fn terminal_of(spec: &ReferenceSpec, schedule: &BankSchedule) -> Option<(f64, f64)> {
    let trace = propagate_open_loop(
        &spec.world,
        &DispersionSet::NOMINAL,
        &spec.initial,
        schedule,
        spec.dt,
        spec.max_time,
        spec.v_f,
    )
    .ok()?;
    let (s, range) = trace.terminal();
    Some((spec.world.planet.altitude(s.r), range))
}

const H_SCALE: f64 = 1_000.0;
const S_SCALE: f64 = 10_000.0;

fn residual(spec: &ReferenceSpec, schedule: &BankSchedule) -> Option<[f64; 2]> {
    terminal_of(spec, schedule).map(|(h, s)| [(h - spec.h_f) / H_SCALE, (s - spec.s_desired) / S_SCALE])
}

fn cost(r: &Option<[f64; 2]>) -> f64 {
    r.map_or(f64::INFINITY, |r| r[0] * r[0] + r[1] * r[1])
}

/// Tunes a bank schedule and returns the profile it flies.
///
/// A grid plus golden-section search over constant bank angles comes first;
/// the best constant angle then seeds a Gauss-Newton solve over the two
/// levels of a two-segment schedule. Whichever schedule lands closer to the
/// (altitude, downrange) target wins.
pub fn generate_reference(spec: &ReferenceSpec) -> Result<ReferenceProfile> {
    spec.initial.validate()?;
    spec.world.validate()?;
    if !(spec.dt > 0.0 && spec.max_time > 0.0 && spec.v_f > 0.0 && spec.s_desired > 0.0) {
        return Err(Error::InvalidParameter(
            "reference generation needs positive dt, max_time, v_f and downrange".into(),
        ));
    }
    let deg = std::f64::consts::PI / 180.0;
    let constant = |s: f64| BankSchedule::Constant { sigma: s * deg };

    // constant-bank family
    let grid_step = 2.5;
    let mut best_deg = f64::NAN;
    let mut best_cost = f64::INFINITY;
    for i in 0..=72 {
        let s = i as f64 * grid_step;
        let c = cost(&residual(spec, &constant(s)));
        if c < best_cost {
            best_cost = c;
            best_deg = s;
        }
    }
    if !best_cost.is_finite() {
        return Err(Error::Reference(format!(
            "no constant bank angle reaches {} m/s within {} s",
            spec.v_f, spec.max_time
        )));
    }
    let (mut lo, mut hi) = ((best_deg - grid_step).max(0.0), (best_deg + grid_step).min(180.0));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    while hi - lo > 1e-3 {
        let m1 = hi - ratio * (hi - lo);
        let m2 = lo + ratio * (hi - lo);
        if cost(&residual(spec, &constant(m1))) <= cost(&residual(spec, &constant(m2))) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let sigma_c = 0.5 * (lo + hi);
    let mut best = constant(sigma_c);
    let mut best_res = residual(spec, &best);
    if cost(&best_res) > best_cost {
        best = constant(best_deg);
        best_res = residual(spec, &best);
    }

    // two-segment family
    let two = |x: [f64; 2]| BankSchedule::TwoSegment {
        sigma1: x[0].clamp(0.0, 180.0) * deg,
        sigma2: x[1].clamp(0.0, 180.0) * deg,
        switch_time: spec.switch_time,
        ramp: spec.ramp,
    };
    let sigma_seed = match best {
        BankSchedule::Constant { sigma } => sigma / deg,
        _ => sigma_c,
    };
    let mut x = [sigma_seed, sigma_seed];
    let mut r = residual(spec, &two(x));
    let fd = 0.25;
    for _ in 0..40 {
        let Some(r0) = r else { break };
        if (r0[0] * H_SCALE).abs() < 10.0 && (r0[1] * S_SCALE).abs() < 50.0 {
            break;
        }
        let mut jac = [[0.0; 2]; 2];
        let mut ok = true;
        for j in 0..2 {
            let mut xp = x;
            xp[j] += if xp[j] + fd > 180.0 { -fd } else { fd };
            let h = xp[j] - x[j];
            match residual(spec, &two(xp)) {
                Some(rp) => {
                    jac[0][j] = (rp[0] - r0[0]) / h;
                    jac[1][j] = (rp[1] - r0[1]) / h;
                }
                None => ok = false,
            }
        }
        if !ok {
            break;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let step = if det.abs() > 1e-12 {
            [
                -(jac[1][1] * r0[0] - jac[0][1] * r0[1]) / det,
                -(-jac[1][0] * r0[0] + jac[0][0] * r0[1]) / det,
            ]
        } else {
            // steepest descent on the squared residual
            [
                -(jac[0][0] * r0[0] + jac[1][0] * r0[1]),
                -(jac[0][1] * r0[0] + jac[1][1] * r0[1]),
            ]
        };
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-3 {
            let trial = [
                (x[0] + alpha * step[0]).clamp(0.0, 180.0),
                (x[1] + alpha * step[1]).clamp(0.0, 180.0),
            ];
            let rt = residual(spec, &two(trial));
            if cost(&rt) < cost(&r) {
                x = trial;
                r = rt;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if cost(&r) < cost(&best_res) {
        best = two(x);
    }
    profile_from_schedule(spec, &best)
}
