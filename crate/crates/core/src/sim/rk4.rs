use crate::{Error, Result};

/// One classical fourth-order Runge-Kutta step of `ẏ = rhs(t, y)`.
///
/// A non-finite stage derivative aborts with [`Error::NonFinite`]; the
/// step index is left at zero for the caller to fill in.
pub fn rk4_step<const N: usize, F>(mut rhs: F, t: f64, y: &[f64; N], dt: f64) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut stage = |tt: f64, yy: &[f64; N]| -> Result<[f64; N]> {
        let k = rhs(tt, yy)?;
        if k.iter().all(|x| x.is_finite()) {
            Ok(k)
        } else {
            Err(Error::NonFinite { step: 0, t: tt })
        }
    };
    let axpy = |a: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * ki;
        }
        out
    };
    let half = 0.5 * dt;
    let k1 = stage(t, y)?;
    let k2 = stage(t + half, &axpy(y, &k1, half))?;
    let k3 = stage(t + half, &axpy(y, &k2, half))?;
    let k4 = stage(t + dt, &axpy(y, &k3, dt))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}
