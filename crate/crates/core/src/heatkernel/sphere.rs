//! Heat kernel on the unit sphere S² for the generator (1/2)Δ.
//!
//! Two independent evaluations:
//! - the Legendre expansion `Σ_l (2l+1)/(4π) e^{-l(l+1)t/2} P_l(cos θ)`,
//!   accurate unless `θ²/t` is large (the terms then cancel catastrophically);
//! - the Mehler–Dirichlet integral of the Poisson-resummed theta series,
//!   `√2 (2πt)^{-3/2} e^{t/8} Σ_k (-1)^k ∫_θ^π (φ+2πk) e^{-(φ+2πk)²/(2t)} (cos θ - cos φ)^{-1/2} dφ`,
//!   evaluated with the Gaussian factor `e^{-θ²/(2t)}` pulled out so that it
//!   works for arbitrarily small `t`.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::quadrature::{graded_breaks, GaussLegendre};

use super::SeriesControl;

/// Legendre series. Returns `(p, dp/dθ)`.
pub fn series(t: f64, theta: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    let (s, c) = theta.sin_cos();
    let decay = (-t).exp();
    // e_l = exp(-l(l+1)t/2), r_l = exp(-l t)
    let mut e = 1.0;
    let mut r = 1.0;
    let (mut p_prev, mut p_cur) = (0.0, 1.0); // P_{l-1}, P_l
    let (mut d_prev, mut d_cur) = (0.0, 0.0); // P'_{l-1}, P'_l (in cos θ)
    let mut sum = 0.0;
    let mut dsum = 0.0;
    let mut l = 0usize;
    loop {
        let lf = l as f64;
        sum += (2.0 * lf + 1.0) * e * p_cur;
        dsum += (2.0 * lf + 1.0) * e * d_cur;

        let u = lf * (lf + 1.0);
        let tail = (2.0 / t) * (-u * t / 2.0).exp();
        let dtail = (u / t + 2.0 / (t * t)) * (-u * t / 2.0).exp();
        if l >= 1 && tail <= ctl.tol * sum.abs() && s * dtail <= ctl.tol * (s * dsum).abs().max(sum.abs()) {
            break;
        }
        if l + 1 > ctl.max_terms {
            return Err(Error::Truncation { terms: ctl.max_terms, partial_sum: sum / (4.0 * PI) });
        }
        // advance to l+1
        let p_next = if l == 0 { c } else { ((2.0 * lf + 1.0) * c * p_cur - lf * p_prev) / (lf + 1.0) };
        let d_next = if l == 0 { 1.0 } else { d_prev + (2.0 * lf + 1.0) * p_cur };
        p_prev = p_cur;
        p_cur = p_next;
        d_prev = d_cur;
        d_cur = d_next;
        r *= decay;
        e *= r;
        l += 1;
    }
    Ok((sum / (4.0 * PI), -s * dsum / (4.0 * PI)))
}

/// Integral representation. Returns `(log p, d log p / dθ)`. Requires `θ > 0`.
pub fn integral(t: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let half = 0.5 * theta;
    let one_minus_c = 2.0 * half.sin().powi(2);
    let one_plus_c = 2.0 * half.cos().powi(2);

    // α-range: cut where the k = 0 Gaussian factor is below e^{-60}, unless
    // the k = -1 image (relevant near the antipode) is still alive.
    // root of δ(2θ + δ) = 120 t, in the form that survives t ≪ θ²
    let dmax = 120.0 * t / (theta + (theta * theta + 120.0 * t).sqrt());
    let alpha_max = if theta + dmax >= PI || (PI * PI - theta * theta) / (2.0 * t) < 60.0 {
        0.5 * PI
    } else {
        let w = 2.0 * (theta + 0.5 * dmax).sin() * (0.5 * dmax).sin();
        (w / one_plus_c).sqrt().min(1.0).asin()
    };
    let alpha_q = half.tan();
    // δ-scale of the Gaussian factor, mapped to α
    let dg = (t / theta).min(t.sqrt()).min(0.5 * (PI - theta));
    let wg = 2.0 * (theta + 0.5 * dg).sin() * (0.5 * dg).sin();
    let alpha_g = (wg / one_plus_c).sqrt().min(1.0).asin();
    let first = 0.25 * alpha_q.min(alpha_g).max(1e-10 * alpha_g).min(alpha_max);
    let breaks = graded_breaks(alpha_max, first, alpha_max / 8.0);

    // images k != 0 weigh at most exp(-(π² - θ²)/2t) against the peak at δ = 0
    let kr = if (PI * PI - theta * theta) / (2.0 * t) > 110.0 { 0 } else { 2 };

    let rule = GaussLegendre::g20();
    let mut num = 0.0;
    let mut den = 0.0;
    for w in breaks.windows(2) {
        for (alpha, wt) in rule.on(w[0], w[1]) {
            let (sa, ca) = alpha.sin_cos();
            let q = one_minus_c + one_plus_c * sa * sa;
            let wv = one_plus_c * sa * sa; // cos θ - cos φ
            let sin_phi = ((one_minus_c + wv) * one_plus_c).sqrt() * ca;
            let denom = sin_phi + s;
            let delta = if denom > 1e-300 {
                let sin_d = c * (2.0 * c * wv - wv * wv) / denom + wv * s;
                let cos_d = (c - wv) * c + sin_phi * s;
                sin_d.atan2(cos_d).max(0.0)
            } else {
                0.0
            };
            let phi = theta + delta;
            let mut h = 0.0;
            let mut dh = 0.0;
            for k in -kr..=kr {
                let kk = TAU * k as f64;
                let ek = (delta + kk) * (2.0 * theta + delta + kk) / (2.0 * t);
                let g = (-ek).exp();
                if g == 0.0 {
                    continue;
                }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let a = phi + kk;
                h += sign * a * g;
                dh += sign * (1.0 - a * a / t) * g;
            }
            let qs = q.sqrt();
            den += wt * 2.0 * h / qs;
            num += wt * (2.0 * dh * ca * one_minus_c.sqrt() / q - s * h * ca * ca / (q * qs));
        }
    }
    let log_p = 0.5 * 2f64.ln() - 1.5 * (TAU * t).ln() + t / 8.0 - theta * theta / (2.0 * t) + den.ln();
    (log_p, num / den)
}

/// The Legendre series is used for `t >= SERIES_T`, and for
/// `SERIES_MIN_T <= t < SERIES_T` when `θ²/(2t) <= SERIES_MAX_Z`.
pub const SERIES_T: f64 = 0.5;
pub const SERIES_MIN_T: f64 = 0.02;
pub const SERIES_MAX_Z: f64 = 5.0;

/// Returns `(log p, d log p / dθ)`.
pub fn radial(t: f64, theta: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    let z = theta * theta / (2.0 * t);
    if t >= SERIES_T || (t >= SERIES_MIN_T && z <= SERIES_MAX_Z) {
        let (p, dp) = series(t, theta, ctl)?;
        Ok((p.ln(), dp / p))
    } else {
        Ok(integral(t, theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_agree_in_overlap() {
        let ctl = SeriesControl::default();
        for &t in &[0.05, 0.1, 0.2, 0.35, 0.5, 0.8] {
            for i in 1..=30 {
                let theta = i as f64 * (PI - 0.02) / 30.0;
                let z = theta * theta / (2.0 * t);
                if z < 0.5 || z > 12.0 {
                    continue;
                }
                let (p, dp) = series(t, theta, &ctl).unwrap();
                let (lp, dlp) = integral(t, theta);
                assert!((p.ln() - lp).abs() < 1e-10, "t={t} θ={theta}: {} vs {lp}", p.ln());
                assert!((dp / p - dlp).abs() < 1e-9 * (1.0 + dlp.abs()), "t={t} θ={theta}: {} vs {dlp}", dp / p);
            }
        }
    }

    #[test]
    fn integral_matches_series_near_the_diagonal() {
        let ctl = SeriesControl::default();
        for t in [0.02, 0.1, 0.4] {
            for theta in [0.0, 1e-6, 1e-3, 0.05] {
                let (p, dp) = series(t, theta, &ctl).unwrap();
                let (lp, dlp) = integral(t, theta);
                assert!((p.ln() - lp).abs() < 1e-10, "t={t} θ={theta}: {} vs {lp}", p.ln());
                assert!((dp / p - dlp).abs() < 1e-8, "t={t} θ={theta}: {} vs {dlp}", dp / p);
            }
        }
    }

    #[test]
    fn integral_near_antipode() {
        let ctl = SeriesControl::default();
        for t in [0.3, 0.45] {
            for theta in [PI - 1e-3, PI - 1e-9, PI] {
                let (p, dp) = series(t, theta, &ctl).unwrap();
                let (lp, dlp) = integral(t, theta);
                assert!((p.ln() - lp).abs() < 1e-10, "t={t} θ={theta}: {} vs {lp}", p.ln());
                assert!((dp / p - dlp).abs() < 1e-8, "t={t} θ={theta}: {} vs {dlp}", dp / p);
            }
        }
    }

    #[test]
    fn normalization_of_series() {
        // 2π ∫_0^π p(t,θ) sin θ dθ = 1
        let ctl = SeriesControl::default();
        for t in [0.3, 1.0, 3.0] {
            let g = GaussLegendre::new(64);
            let v = crate::quadrature::composite(&g, 0.0, PI, 8, |th| TAU * series(t, th, &ctl).unwrap().0 * th.sin());
            assert!((v - 1.0).abs() < 1e-12, "t={t}: {v}");
        }
    }

    #[test]
    fn integral_route_normalizes_at_small_t() {
        let t = 0.01;
        let g = GaussLegendre::new(32);
        let v = crate::quadrature::composite(&g, 1e-9, PI, 64, |th| {
            let (lp, _) = radial(t, th, &SeriesControl::default()).unwrap();
            TAU * lp.exp() * th.sin()
        });
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn tiny_time_gradient_approaches_minus_theta_over_t() {
        for theta in [0.3, 1.0, 2.5] {
            let t = 1e-12;
            let (_, d) = integral(t, theta);
            assert!((d * t / theta + 1.0).abs() < 1e-6, "θ={theta}: {}", d * t / theta);
        }
    }
}
