//! Heat kernel on the unit circle, two independent series.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

use super::SeriesControl;

/// Wrapped Gaussian with the leading factor `(2πt)^{-1/2} e^{-Δ0²/(2t)}`
/// removed, `Δ0` being `Δ` reduced to `(-π, π]`. Returns `(Δ0, S, dS/dΔ)`,
/// where `p = (2πt)^{-1/2} e^{-Δ0²/(2t)} S`; never underflows.
fn wrapped_scaled(t: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64, f64)> {
    let d0 = crate::geometry::angle_diff(0.0, delta);
    let term = |n: i64| {
        let k = TAU * n as f64;
        // (d0+k)² - d0² = k (2 d0 + k)
        let e = (-k * (2.0 * d0 + k) / (2.0 * t)).exp();
        (e, -(d0 + k) / t * e)
    };
    let (mut s, mut ds) = term(0);
    let mut n = 1;
    loop {
        let (a, da) = term(n);
        let (b, db) = term(-n);
        s += a + b;
        ds += da + db;
        // remaining |Δ0+2πk| ≥ a0 = (2n+1)π - |Δ0| ≥ 2nπ on both sides
        let a0 = (2.0 * n as f64 + 1.0) * PI - d0.abs();
        let r = (-TAU * a0 / t).exp();
        let tail = 2.0 * (-(a0 * a0 - d0 * d0) / (2.0 * t)).exp() / (1.0 - r);
        let dtail = tail * (a0 / t + TAU / t * r / (1.0 - r));
        if tail <= ctl.tol * s && dtail <= ctl.tol * (ds.abs() + s) {
            break;
        }
        n += 1;
        if n as usize > ctl.max_terms {
            let partial = (TAU * t).powf(-0.5) * (-d0 * d0 / (2.0 * t)).exp() * s;
            return Err(Error::Truncation { terms: ctl.max_terms, partial_sum: partial });
        }
    }
    Ok((d0, s, ds))
}

/// Wrapped Gaussian: `Σ_n (2πt)^{-1/2} exp(-(Δ+2πn)²/(2t))`.
/// Returns `(p, dp/dΔ)`.
pub fn wrapped(t: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    let (d0, s, ds) = wrapped_scaled(t, delta, ctl)?;
    let lead = (TAU * t).powf(-0.5) * (-d0 * d0 / (2.0 * t)).exp();
    Ok((lead * s, lead * ds))
}

/// Fourier series: `(2π)^{-1} Σ_k e^{-k²t/2} cos(kΔ)`. Returns `(p, dp/dΔ)`.
pub fn fourier(t: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    let mut p = 1.0;
    let mut dp = 0.0;
    // Σ|terms|; once the tail is below its rounding unit no further term can
    // change the floating-point sum
    let mut abs_sum = 1.0;
    let mut dabs_sum = 0.0;
    let mut k = 1usize;
    loop {
        let kf = k as f64;
        let e = (-kf * kf * t / 2.0).exp();
        let (s, c) = (kf * delta).sin_cos();
        p += 2.0 * e * c;
        dp -= 2.0 * kf * e * s;
        abs_sum += 2.0 * e;
        dabs_sum += 2.0 * kf * e;
        let k1 = kf + 1.0;
        let r = (-k1 * t).exp();
        let lead = (-k1 * k1 * t / 2.0).exp();
        let tail = 2.0 * lead / (1.0 - r);
        let dtail = 2.0 * lead * (k1 / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)));
        let value_done = tail <= ctl.tol * p || tail <= 0.1 * f64::EPSILON * abs_sum;
        let deriv_done = dtail <= ctl.tol * (dp.abs() + p) || dtail <= 0.1 * f64::EPSILON * dabs_sum;
        if value_done && deriv_done {
            break;
        }
        k += 1;
        if k > ctl.max_terms {
            return Err(Error::Truncation { terms: ctl.max_terms, partial_sum: p / TAU });
        }
    }
    Ok((p / TAU, dp / TAU))
}

/// Dispatches on `ctl.crossover_t`. Returns `(p, dp/dΔ)`.
pub fn kernel(t: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    if t < ctl.crossover_t {
        wrapped(t, delta, ctl)
    } else {
        fourier(t, delta, ctl)
    }
}

/// `(log p, d log p / dΔ)`, computed without underflow for small `t`.
pub fn log_kernel(t: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    if t < ctl.crossover_t {
        let (d0, s, ds) = wrapped_scaled(t, delta, ctl)?;
        // ds is the derivative of the unscaled sum divided by the lead factor
        Ok((-0.5 * (TAU * t).ln() - d0 * d0 / (2.0 * t) + s.ln(), ds / s))
    } else {
        let (p, dp) = fourier(t, delta, ctl)?;
        Ok((p.ln(), dp / p))
    }
}
