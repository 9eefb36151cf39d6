//! Numerical certificates for the tracking-error dynamics.
//!
//! Everything is 2×2: closed-form Lyapunov solves for the controller and
//! observer-error matrices, the gain-dependent constants of the two ISS
//! bounds, a sample-based fit of the disturbance envelope `|Δ| ≤ l|x₁| + d`,
//! and a simulation check of the linear ISS bound. Matrix norms are
//! spectral norms.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::drag_chain::DeltaSample;
use crate::guidance::GuidanceConfig;
use crate::sim::rk4_step;
use crate::{Error, Result};

/// Max-norm tolerance on every Lyapunov residual.
pub const LYAPUNOV_TOL: f64 = 1e-10;

/// Number of slopes scanned by [`estimate_delta_bound`].
const L_GRID: usize = 4001;

fn b_vec() -> Vector2<f64> {
    Vector2::new(0.0, 1.0)
}

/// Spectral norm of a 2×2 matrix.
pub fn spectral_norm(m: &Matrix2<f64>) -> f64 {
    let ata = m.transpose() * m;
    sym_eigen(&ata).1.max(0.0).sqrt()
}

/// `(λ_min, λ_max)` of a symmetric 2×2 matrix.
pub fn sym_eigen(m: &Matrix2<f64>) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let rad = half_diff.hypot(off);
    (mean - rad, mean + rad)
}

/// Max-norm of `PA + AᵀP + I`.
pub fn lyapunov_residual(p: &Matrix2<f64>, a: &Matrix2<f64>) -> f64 {
    (p * a + a.transpose() * p + Matrix2::identity()).amax()
}

/// Symmetric positive-definite `P` with `PA + AᵀP = −I`.
pub fn solve_lyapunov_2x2(a: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let tr = a.trace();
    let det = a.determinant();
    if !(tr < 0.0) {
        return Err(Error::NotHurwitz(format!("trace {tr} is not negative")));
    }
    if !(det > 0.0) {
        return Err(Error::NotHurwitz(format!("determinant {det} is not positive")));
    }
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    // unknowns (p11, p12, p22) from the (1,1), (1,2) and (2,2) entries
    let m = Matrix3::new(
        2.0 * a11,
        2.0 * a21,
        0.0,
        a12,
        a11 + a22,
        a21,
        0.0,
        2.0 * a12,
        2.0 * a22,
    );
    let rhs = Vector3::new(-1.0, 0.0, -1.0);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Certification("singular Lyapunov system".into()))?;
    let p = Matrix2::new(sol[0], sol[1], sol[1], sol[2]);
    let residual = lyapunov_residual(&p, a);
    if residual > LYAPUNOV_TOL {
        return Err(Error::Certification(format!(
            "Lyapunov residual {residual:e} exceeds {LYAPUNOV_TOL:e}"
        )));
    }
    if !(sym_eigen(&p).0 > 0.0) {
        return Err(Error::Certification(
            "Lyapunov solution is not positive definite".into(),
        ));
    }
    Ok(p)
}

/// `‖P B‖` with `B = [0, 1]ᵀ`: the Euclidean norm of the second column.
pub fn norm_pb(p: &Matrix2<f64>) -> f64 {
    (p * b_vec()).norm()
}

/// Decay margin `κ(ε₀) = 1/ε₀ − 1 − 2ε₀‖P₀B‖l`.
pub fn kappa_of(eps0: f64, p0: &Matrix2<f64>, l: f64) -> f64 {
    1.0 / eps0 - 1.0 - 2.0 * eps0 * norm_pb(p0) * l
}

/// Cross-coupling coefficient `α = (b/ε₀)‖P₀B‖ + ε₀ l ‖PB‖`.
pub fn alpha_of(b: f64, eps0: f64, p0: &Matrix2<f64>, p: &Matrix2<f64>, l: f64) -> f64 {
    b / eps0 * norm_pb(p0) + eps0 * l * norm_pb(p)
}

/// `Q(ε) = [[κ, −α], [−α, 1/ε − 1]]`.
pub fn q_matrix(kappa: f64, alpha: f64, eps: f64) -> Matrix2<f64> {
    Matrix2::new(kappa, -alpha, -alpha, 1.0 / eps - 1.0)
}

/// Largest observer `ε` keeping `Q(ε)` positive definite.
pub fn eps1_star(kappa: f64, alpha: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Certification(format!(
            "kappa = {kappa} is not positive; no observer gain makes Q positive definite"
        )));
    }
    Ok(1.0 / (1.0 + alpha * alpha / kappa))
}

/// Constants of the state-feedback ISS bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFeedbackConstants {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Constants of the combined controller/observer ISS bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputFeedbackConstants {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub c0: f64,
}

pub fn state_feedback_constants(p0: &Matrix2<f64>, kappa: f64) -> StateFeedbackConstants {
    let (lo, hi) = sym_eigen(p0);
    let p0_norm = spectral_norm(p0);
    StateFeedbackConstants {
        lambda1: kappa / hi,
        lambda2: b_vec().norm_squared() * p0_norm * p0_norm / lo,
        lambda3: hi / lo,
    }
}

/// `P′ = block-diag(P₀, P)`, the weight of the composite Lyapunov function.
pub fn composite_weight(p0: &Matrix2<f64>, p: &Matrix2<f64>) -> Matrix4<f64> {
    let mut w = Matrix4::zeros();
    w.fixed_view_mut::<2, 2>(0, 0).copy_from(p0);
    w.fixed_view_mut::<2, 2>(2, 2).copy_from(p);
    w
}

pub fn output_feedback_constants(p0: &Matrix2<f64>, p: &Matrix2<f64>, q: &Matrix2<f64>) -> OutputFeedbackConstants {
    // eigenvalues of a block-diagonal matrix are those of its blocks
    let (lo0, hi0) = sym_eigen(p0);
    let (lo1, hi1) = sym_eigen(p);
    let (w_lo, w_hi) = (lo0.min(lo1), hi0.max(hi1));
    let (p0n, pn) = (spectral_norm(p0), spectral_norm(p));
    OutputFeedbackConstants {
        lambda1: sym_eigen(q).0 / w_hi,
        lambda2: w_hi / w_lo,
        lambda3: w_lo,
        c0: (p0n * p0n + pn * pn) * b_vec().norm_squared(),
    }
}

/// Minimal-area envelope `|Δᵢ| ≤ l|x₁ᵢ| + d` over a sample set.
///
/// "Area" is the envelope's integral over the observed range of `|x₁|`,
/// `l·X²/2 + d·X`. Slopes are scanned on a uniform grid from zero up to the
/// largest sample ratio `|Δ|/|x₁|`; for each slope the smallest admissible
/// `d` is taken, so every sample satisfies the fitted bound. Ties go to the
/// smaller slope.
pub fn estimate_delta_bound(samples: &[DeltaSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let x_max = samples.iter().map(|s| s.x1.abs()).fold(0.0, f64::max);
    let offset_for = |l: f64| {
        samples
            .iter()
            .map(|s| s.delta.abs() - l * s.x1.abs())
            .fold(0.0, f64::max)
    };
    if x_max == 0.0 {
        return Ok((0.0, offset_for(0.0)));
    }
    let l_hi = samples
        .iter()
        .filter(|s| s.x1 != 0.0)
        .map(|s| s.delta.abs() / s.x1.abs())
        .fold(0.0, f64::max);
    let area = |l: f64, d: f64| 0.5 * l * x_max * x_max + d * x_max;
    let mut best = (0.0, offset_for(0.0));
    let mut best_area = area(best.0, best.1);
    for i in 1..L_GRID {
        let l = l_hi * i as f64 / (L_GRID - 1) as f64;
        let d = offset_for(l);
        let a = area(l, d);
        if a < best_area {
            best = (l, d);
            best_area = a;
        }
    }
    Ok(best)
}

/// Count of samples violating a fitted envelope.
pub fn envelope_violations(samples: &[DeltaSample], l: f64, d: f64) -> usize {
    samples
        .iter()
        .filter(|s| s.delta.abs() > l * s.x1.abs() + d + 1e-12 * s.delta.abs().max(1.0))
        .count()
}

/// Matrix exponential `e^{At}` of a 2×2 matrix in closed form.
pub fn expm2(a: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let s = 0.5 * a.trace();
    let shifted = a - Matrix2::identity() * s;
    let q2 = s * s - a.determinant();
    let (c, sh) = if q2 > 0.0 {
        let q = q2.sqrt();
        ((q * t).cosh(), (q * t).sinh() / q)
    } else if q2 < 0.0 {
        let w = (-q2).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    (Matrix2::identity() * c + shifted * sh) * (s * t).exp()
}

/// Result of checking the linear ISS bound along a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssCheck {
    pub pass: bool,
    /// Smallest `bound − ‖x‖` over the grid
    pub worst_margin: f64,
    /// Whether the certificate decays (`λ₁ > 0`)
    pub contractive: bool,
    pub constants: StateFeedbackConstants,
    pub points: usize,
}

/// Step used by [`verify_linear_iss_bound`] [s].
pub const ISS_CHECK_DT: f64 = 0.01;

/// The state-feedback ISS envelope on `‖x(t)‖` for a constant disturbance
/// bound `d`:
///
/// `‖φ‖ · ( √(λ₃ e^{−λ₁t}) ‖φ⁻¹x₀‖ + √((λ₂/λ₁)(1 − e^{−λ₁t})) d )`
///
/// with `φ = diag(ε₀, 1)` mapping stretched coordinates back to `x`.
///
/// When `κ < 0` the Lyapunov function may grow, and the growth rate is
/// bounded through `λ_min(P₀)` instead of `λ_max(P₀)`, i.e. the rate becomes
/// `λ₁·λ₃`. The envelope is then valid but expanding.
pub fn iss_envelope(consts: &StateFeedbackConstants, eps0: f64, x0: Vector2<f64>, d: f64, t: f64) -> f64 {
    let phi_norm = eps0.max(1.0);
    let zeta0 = Vector2::new(x0[0] / eps0, x0[1]).norm();
    let l1 = if consts.lambda1 >= 0.0 {
        consts.lambda1
    } else {
        consts.lambda1 * consts.lambda3
    };
    // (1 − e^{−λ₁t}) / λ₁, continuous through λ₁ = 0
    let gain = if l1 == 0.0 { t } else { -(-l1 * t).exp_m1() / l1 };
    phi_norm * ((consts.lambda3 * (-l1 * t).exp()).sqrt() * zeta0 + (consts.lambda2 * gain).sqrt() * d)
}

/// Simulates `ẋ = Fx + BΔ` with `Δ ≡ d` and checks the ISS envelope at
/// every grid point.
pub fn verify_linear_iss_bound(gains: &GuidanceConfig, d: f64, x0: [f64; 2], horizon: f64) -> Result<IssCheck> {
    let f = gains.closed_loop_matrix();
    let p0 = solve_lyapunov_2x2(&gains.scaled_closed_loop_matrix())?;
    // constant Δ does not depend on x₁, so l = 0
    let consts = state_feedback_constants(&p0, kappa_of(gains.eps0, &p0, 0.0));
    let x0v = Vector2::new(x0[0], x0[1]);
    let steps = (horizon / ISS_CHECK_DT).round() as usize;
    let mut x = x0;
    let mut worst = f64::INFINITY;
    for k in 0..=steps {
        let t = k as f64 * ISS_CHECK_DT;
        let norm = x[0].hypot(x[1]);
        let bound = iss_envelope(&consts, gains.eps0, x0v, d, t);
        worst = worst.min(bound - norm);
        if k < steps {
            x = rk4_step(
                |_, y: &[f64; 2]| {
                    Ok([
                        f[(0, 0)] * y[0] + f[(0, 1)] * y[1],
                        f[(1, 0)] * y[0] + f[(1, 1)] * y[1] + d,
                    ])
                },
                t,
                &x,
                ISS_CHECK_DT,
            )?;
        }
    }
    let scale = 1e-12 * (x0v.norm() + d.abs()).max(1e-300);
    Ok(IssCheck {
        pass: worst >= -scale,
        worst_margin: worst,
        contractive: consts.lambda1 > 0.0,
        constants: consts,
        points: steps + 1,
    })
}

/// Everything the certification computes for one gain set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub gains: GuidanceConfig,
    pub p0: [[f64; 2]; 2],
    pub p: [[f64; 2]; 2],
    pub p0_residual: f64,
    pub p_residual: f64,
    pub l_est: f64,
    pub d_est: f64,
    pub kappa: f64,
    pub alpha: f64,
    /// `Q` at the configured observer `ε`
    pub q: [[f64; 2]; 2],
    pub q_min_eigenvalue: f64,
    /// `None` when `κ ≤ 0`
    pub eps1_star: Option<f64>,
    pub state_feedback: StateFeedbackConstants,
    pub output_feedback: OutputFeedbackConstants,
    /// Both bounds decay and the configured `ε` is below `ε₁*`.
    pub certified: bool,
    pub notes: Vec<String>,
}

fn rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Builds the full certificate for a gain set and a disturbance envelope.
pub fn certify(gains: &GuidanceConfig, l: f64, d: f64) -> Result<CertifyReport> {
    gains.validate()?;
    let f0 = gains.scaled_closed_loop_matrix();
    let a0 = gains.observer_error_matrix();
    let p0 = solve_lyapunov_2x2(&f0)?;
    let p = solve_lyapunov_2x2(&a0)?;
    let kappa = kappa_of(gains.eps0, &p0, l);
    let alpha = alpha_of(gains.b, gains.eps0, &p0, &p, l);
    let q = q_matrix(kappa, alpha, gains.eps);
    let q_min = sym_eigen(&q).0;
    let star = eps1_star(kappa, alpha).ok();
    let sf = state_feedback_constants(&p0, kappa);
    let of = output_feedback_constants(&p0, &p, &q);

    let mut notes =
        vec!["composite Lyapunov weight taken as block-diag(P0, P) to match V = z'P0 z + n'P n".to_string()];
    if kappa <= 0.0 {
        notes.push(format!(
            "kappa = {kappa:.6} <= 0: eps0 = {} is too large for a decaying certificate",
            gains.eps0
        ));
    }
    if let Some(s) = star {
        if gains.eps >= s {
            notes.push(format!("configured eps = {} is not below eps1* = {s:.6}", gains.eps));
        }
    }
    let certified = kappa > 0.0 && star.is_some_and(|s| gains.eps < s) && of.lambda1 > 0.0;

    Ok(CertifyReport {
        gains: *gains,
        p0: rows(&p0),
        p: rows(&p),
        p0_residual: lyapunov_residual(&p0, &f0),
        p_residual: lyapunov_residual(&p, &a0),
        l_est: l,
        d_est: d,
        kappa,
        alpha,
        q: rows(&q),
        q_min_eigenvalue: q_min,
        eps1_star: star,
        state_feedback: sf,
        output_feedback: of,
        certified,
        notes,
    })
}
