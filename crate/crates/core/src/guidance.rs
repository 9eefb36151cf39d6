//! Bank-angle guidance: the feedback-linearizing drag-tracking law in its
//! state-feedback and observer-based forms, the high-gain observer, and the
//! `u → σ` command shaping.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::sim::rk4_step;
use crate::{Error, Result};

/// Bounds of `u = cos σ`.
pub const U_LIMITS: (f64, f64) = (-1.0, 1.0);

/// Controller and observer gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub a: f64,
    pub b: f64,
    pub eps0: f64,
    pub l1: f64,
    pub l2: f64,
    pub eps: f64,
    /// Below this `|g0|` [m/s⁴] the law is not inverted and the previous
    /// bank command is held.
    pub g0_floor: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            a: 1.982,
            b: 3.0,
            eps0: 5.0,
            l1: 2.0,
            l2: 1.0,
            eps: 0.481,
            g0_floor: 1e-6,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("a", self.a),
            ("b", self.b),
            ("eps0", self.eps0),
            ("l1", self.l1),
            ("l2", self.l2),
            ("eps", self.eps),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "guidance gain {name} must be positive, got {value}"
                )));
            }
        }
        if !(self.g0_floor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "g0_floor must be non-negative, got {}",
                self.g0_floor
            )));
        }
        Ok(())
    }

    /// Position gain `a / ε₀²`.
    #[inline]
    pub fn k1(&self) -> f64 {
        self.a / (self.eps0 * self.eps0)
    }

    /// Rate gain `b / ε₀`.
    #[inline]
    pub fn k2(&self) -> f64 {
        self.b / self.eps0
    }

    /// Closed-loop tracking-error matrix `F = [[0, 1], [−a/ε₀², −b/ε₀]]`.
    pub fn closed_loop_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -self.k1(), -self.k2())
    }

    /// `F₀ = [[0, 1], [−a, −b]]`, the closed loop in stretched coordinates.
    pub fn scaled_closed_loop_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -self.a, -self.b)
    }

    /// `A₀ = [[−l₁, 1], [−l₂, 0]]`, the scaled observer-error matrix.
    pub fn observer_error_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(-self.l1, 1.0, -self.l2, 0.0)
    }
}

/// High-gain observer state: estimates of the tracking error and its rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub xhat1: f64,
    pub xhat2: f64,
}

impl ObserverState {
    /// `x̂₁` starts at the measured error, `x̂₂` at zero.
    pub fn initialized(x1_meas: f64) -> Self {
        ObserverState {
            xhat1: x1_meas,
            xhat2: 0.0,
        }
    }
}

/// Drag tracking error `x₁ = D − D*` and its rate `x₂ = Ḋ − Ḋ*`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingState {
    pub x1: f64,
    pub x2: f64,
}

/// Unclamped state-feedback command, or `None` when `|g0|` is below the
/// singularity floor and the caller must fall back to holding σ.
pub fn state_feedback_u(x1: f64, x2: f64, f: f64, g0: f64, d_ddot_star: f64, cfg: &GuidanceConfig) -> Option<f64> {
    if !(g0.abs() >= cfg.g0_floor) || g0 == 0.0 {
        return None;
    }
    Some((-f + d_ddot_star - cfg.k1() * x1 - cfg.k2() * x2) / g0)
}

/// The same law with the observer's rate estimate in place of `x₂`.
#[inline]
pub fn output_feedback_u(x1: f64, xhat2: f64, f: f64, g0: f64, d_ddot_star: f64, cfg: &GuidanceConfig) -> Option<f64> {
    state_feedback_u(x1, xhat2, f, g0, d_ddot_star, cfg)
}

/// Observer rates for a measured tracking error `x1`.
pub fn observer_rates(obs: &ObserverState, x1: f64, cfg: &GuidanceConfig) -> [f64; 2] {
    let innovation = x1 - obs.xhat1;
    [
        obs.xhat2 + cfg.l1 / cfg.eps * innovation,
        -cfg.k1() * x1 - cfg.k2() * obs.xhat2 + cfg.l2 / (cfg.eps * cfg.eps) * innovation,
    ]
}

/// Advances the observer by one RK4 step with the measurement held.
pub fn observer_step(obs: &ObserverState, x1_meas: f64, cfg: &GuidanceConfig, dt: f64) -> Result<ObserverState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let y = rk4_step(
        |_, y: &[f64; 2]| {
            Ok(observer_rates(
                &ObserverState {
                    xhat1: y[0],
                    xhat2: y[1],
                },
                x1_meas,
                cfg,
            ))
        },
        0.0,
        &[obs.xhat1, obs.xhat2],
        dt,
    )?;
    Ok(ObserverState {
        xhat1: y[0],
        xhat2: y[1],
    })
}

/// Clamped command and the bank angle realizing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankCommand {
    pub u: f64,
    /// Bank angle in [0, π] [rad]
    pub sigma: f64,
    pub saturated: bool,
}

pub fn saturate_and_bank(u_raw: f64) -> BankCommand {
    let u = u_raw.clamp(U_LIMITS.0, U_LIMITS.1);
    let sigma = u.acos().clamp(0.0, PI);
    BankCommand {
        u,
        sigma,
        saturated: u != u_raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_gains() -> GuidanceConfig {
        GuidanceConfig {
            a: 1.0,
            b: 1.0,
            eps0: 1.0,
            ..GuidanceConfig::default()
        }
    }

    #[test]
    fn state_feedback_examples() {
        let cfg = unit_gains();
        assert_eq!(state_feedback_u(0.0, 0.0, 0.0, -1.0, 0.0, &cfg), Some(0.0));
        assert_eq!(state_feedback_u(1.0, 1.0, 0.0, -1.0, 0.0, &cfg), Some(2.0));
        assert_eq!(state_feedback_u(1.0, 1.0, 0.0, -2.0, 0.0, &cfg), Some(1.0));
    }

    #[test]
    fn singular_g0_signals_fallback() {
        let cfg = GuidanceConfig {
            g0_floor: 1e-3,
            ..unit_gains()
        };
        assert_eq!(state_feedback_u(1.0, 0.0, 0.0, -1e-4, 0.0, &cfg), None);
        let zero_floor = GuidanceConfig {
            g0_floor: 0.0,
            ..unit_gains()
        };
        assert_eq!(state_feedback_u(1.0, 0.0, 0.0, 0.0, 0.0, &zero_floor), None);
    }

    #[test]
    fn output_feedback_examples() {
        let cfg = GuidanceConfig::default();
        assert_eq!(
            output_feedback_u(0.3, -0.2, 0.5, -0.7, 0.1, &cfg),
            state_feedback_u(0.3, -0.2, 0.5, -0.7, 0.1, &cfg)
        );
        assert_eq!(output_feedback_u(0.0, 0.0, 0.0, -0.7, 0.0, &cfg), Some(0.0));
        assert_eq!(output_feedback_u(0.0, 0.0, 1.0, -0.7, 1.0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn observer_zero_innovation_rates() {
        let cfg = GuidanceConfig::default();
        let obs = ObserverState {
            xhat1: 0.4,
            xhat2: -0.3,
        };
        let r = observer_rates(&obs, 0.4, &cfg);
        assert_eq!(r[0], -0.3);
        assert_relative_eq!(r[1], -cfg.k1() * 0.4 - cfg.k2() * -0.3, max_relative = 1e-15);
    }

    #[test]
    fn observer_equilibrium() {
        let cfg = GuidanceConfig::default();
        let mut obs = ObserverState::default();
        for _ in 0..100 {
            obs = observer_step(&obs, 0.0, &cfg, 0.05).unwrap();
        }
        assert_eq!(obs, ObserverState::default());
        assert!(observer_step(&obs, 0.0, &cfg, 0.0).is_err());
    }

    /// With a constant measured error and no disturbance the estimation
    /// error decays, and faster for smaller ε. The reference solution for
    /// the true pair under the same law is simulated alongside.
    #[test]
    fn observer_error_decay_speeds_up_with_smaller_eps() {
        let mut rates = Vec::new();
        for eps in [0.5, 0.25, 0.1] {
            let cfg = GuidanceConfig {
                eps,
                ..GuidanceConfig::default()
            };
            // x̃ dynamics with Δ = 0: ε η̇ = A₀ η in stretched coordinates
            let a0 = cfg.observer_error_matrix() / eps;
            let dt = 1e-3;
            let mut e = [1.0 / eps, 0.0];
            let mut t = 0.0;
            let mut samples = Vec::new();
            while t < 12.0 * eps {
                e = rk4_step(
                    |_, y: &[f64; 2]| {
                        Ok([
                            a0[(0, 0)] * y[0] + a0[(0, 1)] * y[1],
                            a0[(1, 0)] * y[0] + a0[(1, 1)] * y[1],
                        ])
                    },
                    t,
                    &e,
                    dt,
                )
                .unwrap();
                t += dt;
                if t > 4.0 * eps {
                    samples.push((t, (e[0] * e[0] + e[1] * e[1]).sqrt().ln()));
                }
            }
            let n = samples.len() as f64;
            let (mt, my) = samples
                .iter()
                .fold((0.0, 0.0), |acc, s| (acc.0 + s.0 / n, acc.1 + s.1 / n));
            let slope = samples.iter().map(|s| (s.0 - mt) * (s.1 - my)).sum::<f64>()
                / samples.iter().map(|s| (s.0 - mt).powi(2)).sum::<f64>();
            rates.push(-slope);
        }
        assert!(rates.iter().all(|r| *r > 0.0));
        assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
    }

    #[test]
    fn bank_command_examples() {
        assert_eq!(
            saturate_and_bank(2.0),
            BankCommand {
                u: 1.0,
                sigma: 0.0,
                saturated: true
            }
        );
        let c = saturate_and_bank(0.0);
        assert_eq!((c.u, c.saturated), (0.0, false));
        assert_relative_eq!(c.sigma, FRAC_PI_2, max_relative = 1e-15);
        assert_eq!(
            saturate_and_bank(-1.5),
            BankCommand {
                u: -1.0,
                sigma: PI,
                saturated: true
            }
        );
    }

    #[test]
    fn closed_loop_matrix_is_hurwitz_with_known_roots() {
        let f = GuidanceConfig::default().closed_loop_matrix();
        let tr = f.trace();
        let det = f.determinant();
        let disc = (tr * tr - 4.0 * det).sqrt();
        let (r1, r2) = ((tr - disc) / 2.0, (tr + disc) / 2.0);
        assert_relative_eq!(r1, -0.403_54, epsilon = 5e-6);
        assert_relative_eq!(r2, -0.196_46, epsilon = 5e-6);
    }

    proptest! {
        #[test]
        fn bank_in_range_and_roundtrip(u_raw in -3.0..3.0f64) {
            let c = saturate_and_bank(u_raw);
            prop_assert!((0.0..=PI).contains(&c.sigma));
            if (-1.0..=1.0).contains(&u_raw) {
                prop_assert!(!c.saturated);
                prop_assert!((c.sigma.cos() - u_raw).abs() < 1e-12);
            } else {
                prop_assert!(c.saturated);
            }
        }

        #[test]
        fn closed_loop_hurwitz_for_positive_gains(a in 1e-3..100.0f64, b in 1e-3..100.0f64, eps0 in 1e-2..50.0f64) {
            let cfg = GuidanceConfig { a, b, eps0, ..GuidanceConfig::default() };
            let f = cfg.closed_loop_matrix();
            prop_assert!(f.trace() < 0.0 && f.determinant() > 0.0);
        }
    }
}
