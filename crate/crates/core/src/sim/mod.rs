//! Fixed-step closed-loop simulation of the truth plant, the guidance law
//! and the observer.
//!
//! Each step measures drag at the current truth state, evaluates the
//! onboard drag chain, forms the command, logs, and then advances plant,
//! downrange and observer together with one RK4 step while the bank angle
//! is held. The run stops when speed drops to the terminal velocity (the
//! crossing is linearly interpolated inside the last step) or at
//! `max_time`.

mod log;
mod rk4;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use self::log::{LogRecord, RunSummary, TrajectoryLog};
pub use self::rk4::rk4_step;

use crate::drag_chain::onboard_terms;
use crate::dynamics::{downrange_rate, eom_rhs, specific_energy, EntryState};
use crate::guidance::{
    observer_rates, output_feedback_u, saturate_and_bank, state_feedback_u, GuidanceConfig, ObserverState,
};
use crate::models::{aero_accels, atmospheric_density, DispersionSet, World};
use crate::reference::ReferenceProfile;
use crate::{Error, Result};

/// Default integration step [s].
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceMode {
    /// Fly the profile's generating bank schedule.
    OpenLoopNominal,
    /// Law fed with the model-derived drag-rate error.
    StateFeedback,
    /// Law fed with the high-gain observer's estimate.
    OutputFeedback,
}

impl GuidanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuidanceMode::OpenLoopNominal => "open-loop-nominal",
            GuidanceMode::StateFeedback => "state-feedback",
            GuidanceMode::OutputFeedback => "output-feedback",
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open-loop-nominal" => Ok(GuidanceMode::OpenLoopNominal),
            "state-feedback" => Ok(GuidanceMode::StateFeedback),
            "output-feedback" => Ok(GuidanceMode::OutputFeedback),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode '{other}' (expected open-loop-nominal, state-feedback or output-feedback)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: GuidanceMode,
    pub world: World,
    pub dispersions: DispersionSet,
    pub guidance: GuidanceConfig,
    pub profile: Arc<ReferenceProfile>,
    pub initial: EntryState,
    /// Start time on the profile's clock [s]
    pub t0: f64,
    pub dt: f64,
    pub max_time: f64,
    /// Terminal velocity [m/s]
    pub v_f: f64,
    /// Desired terminal altitude, for the altitude error [m]
    pub h_f: f64,
    /// Additive Gaussian noise on measured drag [m/s²]
    pub noise_std: Option<f64>,
    pub seed: u64,
    /// Log every k-th step; the initial and terminal records are always kept.
    pub log_every: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.max_time > 0.0 && self.v_f > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "run needs dt > 0, max_time > 0, V_f > 0 (got {}, {}, {})",
                self.dt, self.max_time, self.v_f
            )));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter("log_every must be at least 1".into()));
        }
        if let Some(std) = self.noise_std {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(Error::InvalidParameter(format!("noise std must be >= 0, got {std}")));
            }
        }
        self.world.validate()?;
        self.guidance.validate()?;
        self.initial.validate()?;
        self.profile.validate()?;
        if self.mode == GuidanceMode::OpenLoopNominal && self.profile.schedule.is_none() {
            return Err(Error::InvalidParameter(
                "open-loop mode needs a profile that records its bank schedule".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step command and its flags.
#[derive(Debug, Clone, Copy)]
struct Command {
    sigma: f64,
    u_raw: f64,
    u: f64,
    saturated: bool,
    held: bool,
}

const N: usize = 9;
const S_IDX: usize = 6;
const OBS_IDX: usize = 7;

fn truth_drag(world: &World, disp: &DispersionSet, st: &EntryState) -> Result<f64> {
    let rho = atmospheric_density(world.planet.altitude(st.r), &world.planet, disp.drho_frac);
    Ok(aero_accels(rho, st.v, &world.vehicle, disp)?.drag)
}

fn locate(err: Error, step: usize, t: f64) -> Error {
    match err {
        Error::NonFinite { t, .. } => Error::NonFinite { step, t },
        Error::Domain(reason) => Error::DomainAt { t, reason },
        Error::InvalidParameter(reason) => Error::DomainAt { t, reason },
        other => other,
    }
}

/// Runs one simulation and returns the full log and its summary.
pub fn run_closed_loop(cfg: &RunConfig) -> Result<(TrajectoryLog, RunSummary)> {
    cfg.validate()?;
    let world = &cfg.world;
    let disp = &cfg.dispersions;
    let gains = &cfg.guidance;
    let profile = cfg.profile.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = match cfg.noise_std {
        Some(std) if std > 0.0 => Some(Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?),
        _ => None,
    };

    let mut y = [0.0; N];
    y[..6].copy_from_slice(&cfg.initial.to_array());

    let expected = (cfg.max_time / cfg.dt).ceil() as usize / cfg.log_every + 2;
    let mut records = Vec::with_capacity(expected.min(1 << 20));
    let mut sigma_prev = 0.0;
    let mut step = 0usize;
    let mut terminated = false;

    // evaluates measurement, onboard terms and the logged record at (t, y)
    let observe =
        |t: f64, y: &[f64; N], noise_k: f64, cmd: Option<Command>, sigma_prev: f64| -> Result<(LogRecord, Command)> {
            let st = EntryState::from_array(y);
            let drag = truth_drag(world, disp, &st)? + noise_k;
            let terms = onboard_terms(drag, &st, &world.planet, &world.vehicle)?;
            let r = profile.sample(t);
            let x1 = drag - r.d;
            let x2 = terms.drag_rate - r.d_dot;
            let obs = ObserverState {
                xhat1: y[OBS_IDX],
                xhat2: y[OBS_IDX + 1],
            };
            let cmd = match cmd {
                Some(c) => c,
                None => {
                    let law = match cfg.mode {
                        GuidanceMode::OpenLoopNominal => None,
                        GuidanceMode::StateFeedback => state_feedback_u(x1, x2, terms.f, terms.g0, r.d_ddot, gains),
                        GuidanceMode::OutputFeedback => {
                            output_feedback_u(x1, obs.xhat2, terms.f, terms.g0, r.d_ddot, gains)
                        }
                    };
                    if let (GuidanceMode::OpenLoopNominal, Some(schedule)) = (cfg.mode, profile.schedule) {
                        let sigma = schedule.at(t);
                        Command {
                            sigma,
                            u_raw: sigma.cos(),
                            u: sigma.cos(),
                            saturated: false,
                            held: false,
                        }
                    } else if let Some(u_raw) = law {
                        let b = saturate_and_bank(u_raw);
                        Command {
                            sigma: b.sigma,
                            u_raw,
                            u: b.u,
                            saturated: b.saturated,
                            held: false,
                        }
                    } else {
                        Command {
                            sigma: sigma_prev,
                            u_raw: sigma_prev.cos(),
                            u: sigma_prev.cos(),
                            saturated: false,
                            held: true,
                        }
                    }
                }
            };
            let record = LogRecord {
                t,
                state: st,
                h: world.planet.altitude(st.r),
                s: y[S_IDX],
                drag,
                drag_rate: terms.drag_rate,
                d_star: r.d,
                d_star_dot: r.d_dot,
                d_star_ddot: r.d_ddot,
                x1,
                x2,
                sigma: cmd.sigma,
                u_raw: cmd.u_raw,
                u: cmd.u,
                saturated: cmd.saturated,
                held: cmd.held,
                xhat1: obs.xhat1,
                xhat2: obs.xhat2,
                f: terms.f,
                g0: terms.g0,
                energy: specific_energy(&st, &world.planet),
            };
            Ok((record, cmd))
        };

    let observer_on = cfg.mode == GuidanceMode::OutputFeedback;
    if observer_on {
        let st = EntryState::from_array(&y);
        let x1 = truth_drag(world, disp, &st)? - profile.sample(cfg.t0).d;
        let obs = ObserverState::initialized(x1);
        y[OBS_IDX] = obs.xhat1;
        y[OBS_IDX + 1] = obs.xhat2;
    }

    loop {
        let t = cfg.t0 + step as f64 * cfg.dt;
        let noise_k = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
        let (record, cmd) = observe(t, &y, noise_k, None, sigma_prev).map_err(|e| locate(e, step, t))?;
        sigma_prev = cmd.sigma;
        let at_limit = t - cfg.t0 >= cfg.max_time - 1e-9 * cfg.dt;
        if step.is_multiple_of(cfg.log_every) || at_limit {
            records.push(record);
        }
        if at_limit {
            break;
        }

        let sigma = cmd.sigma;
        let next = rk4_step(
            |tt, yy: &[f64; N]| {
                let st = EntryState::from_array(yy);
                let d = eom_rhs(&st, sigma, &world.planet, &world.vehicle, disp)?.to_array();
                let mut out = [0.0; N];
                out[..6].copy_from_slice(&d);
                out[S_IDX] = downrange_rate(&st);
                if observer_on {
                    let x1 = truth_drag(world, disp, &st)? + noise_k - profile.sample(tt).d;
                    let obs = ObserverState {
                        xhat1: yy[OBS_IDX],
                        xhat2: yy[OBS_IDX + 1],
                    };
                    let r = observer_rates(&obs, x1, gains);
                    out[OBS_IDX] = r[0];
                    out[OBS_IDX + 1] = r[1];
                }
                Ok(out)
            },
            t,
            &y,
            cfg.dt,
        )
        .map_err(|e| locate(e, step, t))?;

        if next[3] <= cfg.v_f {
            let frac = (y[3] - cfg.v_f) / (y[3] - next[3]);
            let mut yf = [0.0; N];
            for i in 0..N {
                yf[i] = y[i] + frac * (next[i] - y[i]);
            }
            yf[3] = cfg.v_f;
            let tf = t + frac * cfg.dt;
            if frac < 1e-9 && step.is_multiple_of(cfg.log_every) {
                records.pop();
            }
            let (record, _) = observe(tf, &yf, noise_k, Some(cmd), sigma_prev).map_err(|e| locate(e, step + 1, tf))?;
            records.push(record);
            terminated = true;
            break;
        }
        y = next;
        step += 1;
    }

    let log = TrajectoryLog { records };
    let summary = summarize(&log, cfg, terminated);
    Ok((log, summary))
}

fn summarize(log: &TrajectoryLog, cfg: &RunConfig, terminated: bool) -> RunSummary {
    let recs = &log.records;
    let last = recs.last().expect("a run logs at least its initial state");
    let n = recs.len() as f64;
    let saturated = recs.iter().filter(|r| r.saturated).count() as f64;
    let held = recs.iter().filter(|r| r.held).count() as f64;
    let settle = recs.iter().rposition(|r| r.saturated || r.held).map_or(0, |i| i + 1);
    let max_x1 = recs[settle..].iter().map(|r| r.x1.abs()).fold(0.0, f64::max);
    RunSummary {
        terminated,
        t_final: last.t,
        terminal_state: last.state,
        h_final: last.h,
        s_final: last.s,
        downrange_error: last.s - cfg.profile.s_target,
        altitude_error: last.h - cfg.h_f,
        saturation_fraction: saturated / n,
        hold_fraction: held / n,
        max_abs_x1_after_transient: max_x1,
        steps: recs.len(),
    }
}
