//! Minimal heat kernels for the generator `(1/2)Δ` on the model manifolds,
//! their spatial log-gradients, and quadrature of the heat semigroup.
//!
//! Every model is two-point homogeneous, so the kernel is a function of
//! `(t, d(x, y))` only. All evaluation goes through [`radial_log_kernel`],
//! which returns `log p` and `∂_d log p` without underflow.

pub mod circle;
pub mod sphere;
mod table;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use smallvec::smallvec;

use crate::error::{Error, Result};
use crate::geometry::{Coords, ManifoldModel, ModelKind, Point, TangentVector};
use crate::quadrature::GaussLegendre;

/// Truncation control for the spectral series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesControl {
    /// Relative tail tolerance.
    pub tol: f64,
    pub max_terms: usize,
    /// Circle: wrapped Gaussian below, Fourier series at or above.
    pub crossover_t: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { tol: 1e-12, max_terms: 10_000, crossover_t: 0.5 }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-6) {
            return Err(Error::Config(format!("series tol must lie in (0, 1e-6], got {}", self.tol)));
        }
        if self.max_terms < 16 {
            return Err(Error::Config(format!("series max_terms must be >= 16, got {}", self.max_terms)));
        }
        if !(self.crossover_t > 0.0) {
            return Err(Error::Config("series crossover_t must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel value, log-value and spatial log-gradient at `(t, x, y)`.
#[derive(Clone, Debug, Serialize)]
pub struct KernelEval {
    pub t: f64,
    pub x: Point,
    pub y: Point,
    pub value: f64,
    pub log_value: f64,
    /// Gradient of `log p(t, ·, y)` at `x` in the canonical frame.
    pub log_grad_x: TangentVector,
    /// Set when `x` lies within [`CUT_LOCUS_BAND`] of the cut locus of `y`
    /// and the gradient came from a one-sided finite difference.
    pub cut_locus_fallback: bool,
}

/// Distance from the antipode below which the sphere gradient falls back to
/// finite differences.
pub const CUT_LOCUS_BAND: f64 = 1e-6;

const FALLBACK_STEP: f64 = 1e-7;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

/// `ln(ρ / sinh ρ)`.
fn ln_rho_over_sinh(rho: f64) -> f64 {
    if rho < 1e-3 {
        let r2 = rho * rho;
        -r2 / 6.0 + r2 * r2 / 180.0
    } else if rho < 20.0 {
        (rho / rho.sinh()).ln()
    } else {
        rho.ln() - rho + std::f64::consts::LN_2 - (-2.0 * rho).exp().ln_1p()
    }
}

/// `1/ρ - coth ρ`.
fn inv_minus_coth(rho: f64) -> f64 {
    if rho < 1e-3 {
        let r3 = rho * rho * rho;
        -rho / 3.0 + r3 / 45.0
    } else {
        1.0 / rho - 1.0 / rho.tanh()
    }
}

/// `(log p, ∂_d log p)` as a function of time and geodesic distance.
pub fn radial_log_kernel(model: &ManifoldModel, t: f64, d: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    check_time(t)?;
    match model.kind {
        ModelKind::EuclideanR(m) => Ok((-0.5 * m as f64 * (TAU * t).ln() - d * d / (2.0 * t), -d / t)),
        ModelKind::CircleS1 => circle::log_kernel(t, d, ctl),
        ModelKind::SphereS2 => sphere::radial(t, d, ctl),
        ModelKind::HyperbolicH3 => {
            let lp = -1.5 * (TAU * t).ln() + ln_rho_over_sinh(d) - d * d / (2.0 * t) - 0.5 * t;
            Ok((lp, inv_minus_coth(d) - d / t))
        }
    }
}

/// [`radial_log_kernel`]'s value for repeated calls at a small set of times;
/// the sphere goes through per-time tables (validated to 1e-10).
pub fn tabulated_log_kernel(model: &ManifoldModel, t: f64, d: f64, ctl: &SeriesControl) -> Result<f64> {
    if model.kind == ModelKind::SphereS2 {
        check_time(t)?;
        table::sphere_radial_log(t, d, ctl)
    } else {
        Ok(radial_log_kernel(model, t, d, ctl)?.0)
    }
}

/// `log p(t, x, y)` without point validation.
pub fn log_kernel_value(model: &ManifoldModel, t: f64, x: &Point, y: &Point, ctl: &SeriesControl) -> Result<f64> {
    Ok(radial_log_kernel(model, t, model.distance(x, y), ctl)?.0)
}

/// Gradient of `log p(t, ·, y)` at `x` as an ambient vector, plus a flag
/// telling whether the cut-locus fallback was used. No point validation.
pub fn log_gradient_ambient(
    model: &ManifoldModel,
    t: f64,
    x: &Point,
    y: &Point,
    ctl: &SeriesControl,
) -> Result<(Coords, bool)> {
    gradient_with(model, t, x, y, ctl, |d| Ok(radial_log_kernel(model, t, d, ctl)?.1))
}

/// [`log_gradient_ambient`] for repeated calls at a small set of times, as in
/// the guided bridge samplers: on the sphere the radial derivative comes from
/// a per-time Chebyshev table (validated to 1e-10 against the direct route).
pub fn bridge_drift(model: &ManifoldModel, t: f64, x: &Point, y: &Point, ctl: &SeriesControl) -> Result<(Coords, bool)> {
    if model.kind == ModelKind::SphereS2 {
        check_time(t)?;
        gradient_with(model, t, x, y, ctl, |d| table::sphere_radial_derivative(t, d, ctl))
    } else {
        log_gradient_ambient(model, t, x, y, ctl)
    }
}

fn gradient_with<F: Fn(f64) -> Result<f64>>(
    model: &ManifoldModel,
    t: f64,
    x: &Point,
    y: &Point,
    ctl: &SeriesControl,
    radial_derivative: F,
) -> Result<(Coords, bool)> {
    let (d, dir) = model.direction_to(x, y);
    let zero = || -> Coords { smallvec![0.0; model.chart_len()] };
    if d == 0.0 {
        return Ok((zero(), false));
    }
    let near_cut = model.kind == ModelKind::SphereS2 && d > PI - CUT_LOCUS_BAND;
    match dir {
        Some(u) if !near_cut => {
            let dl = radial_derivative(d)?;
            // ∇_x d(x, y) = -u
            Ok((u.iter().map(|ui| -dl * ui).collect(), false))
        }
        _ => {
            let base = radial_log_kernel(model, t, d, ctl)?.0;
            let mut g = zero();
            for e in model.frame(x) {
                let step: Coords = e.iter().map(|v| v * FALLBACK_STEP).collect();
                let xh = model.exp_ambient(x, &step);
                let lh = log_kernel_value(model, t, &xh, y, ctl)?;
                let c = (lh - base) / FALLBACK_STEP;
                for (gi, ei) in g.iter_mut().zip(e.iter()) {
                    *gi += c * ei;
                }
            }
            Ok((g, true))
        }
    }
}

/// Heat kernel with its log-gradient in `x`.
pub fn kernel(model: &ManifoldModel, t: f64, x: &Point, y: &Point, ctl: &SeriesControl) -> Result<KernelEval> {
    check_time(t)?;
    model.validate(x)?;
    model.validate(y)?;
    let log_value = log_kernel_value(model, t, x, y, ctl)?;
    let (g, fallback) = log_gradient_ambient(model, t, x, y, ctl)?;
    Ok(KernelEval {
        t,
        x: x.clone(),
        y: y.clone(),
        value: log_value.exp(),
        log_value,
        log_grad_x: TangentVector { base: x.clone(), components: model.to_components(x, &g) },
        cut_locus_fallback: fallback,
    })
}

/// Gradient of `log p(t, ·, y)` at `x` in the canonical frame at `x`.
pub fn log_kernel_gradient(
    model: &ManifoldModel,
    t: f64,
    x: &Point,
    y: &Point,
    ctl: &SeriesControl,
) -> Result<TangentVector> {
    Ok(kernel(model, t, x, y, ctl)?.log_grad_x)
}

/// Quadrature settings for integrals against the heat kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Initial number of 20-point panels in the radial (or only) direction.
    pub panels: usize,
    /// Initial number of 20-point panels per angular direction.
    pub angular_panels: usize,
    /// Absolute tolerance on the error estimate.
    pub tol: f64,
    /// Maximum number of panel doublings.
    pub max_refinements: usize,
    pub series: SeriesControl,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panels: 8, angular_panels: 4, tol: 1e-9, max_refinements: 4, series: SeriesControl::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    /// Difference between the last two refinement levels plus the bound on
    /// the truncated tail.
    pub error_estimate: f64,
    pub nodes: usize,
}

/// `Σ w_i p(t, x, z_i) f(z_i)` at one resolution, with the tail mass.
fn semigroup_level<F: Fn(&Point) -> f64>(
    model: &ManifoldModel,
    t: f64,
    f: &F,
    x: &Point,
    np: usize,
    na: usize,
    ctl: &SeriesControl,
) -> Result<(f64, f64, f64, usize)> {
    let g = GaussLegendre::g20();
    let st = t.sqrt();
    let mut sum = 0.0;
    let mut fmax: f64 = 0.0;
    let mut nodes = 0usize;
    let mut acc = |w: f64, z: &Point| {
        let v = f(z);
        fmax = fmax.max(v.abs());
        nodes += 1;
        w * v
    };
    // nodes of a composite rule on [a, b]
    let rule = |a: f64, b: f64, panels: usize| -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        (0..panels).flat_map(|k| g.on(a + k as f64 * h, a + (k + 1) as f64 * h).collect::<Vec<_>>()).collect()
    };
    let tail;
    match model.kind {
        ModelKind::CircleS1 => {
            let panels = np.max((PI / st).ceil() as usize);
            for (s, w) in rule(-PI, PI, panels) {
                let lp = circle::log_kernel(t, s, ctl)?.0;
                let z = model.exp_ambient(x, &[s]);
                sum += acc(w * lp.exp(), &z);
            }
            tail = 0.0;
        }
        ModelKind::SphereS2 => {
            let panels = np.max((0.5 * PI / st).ceil() as usize);
            let e = model.frame(x);
            let phis = rule(0.0, TAU, na);
            for (th, w) in rule(0.0, PI, panels) {
                let lp = sphere::radial(t, th, ctl)?.0;
                let (s, c) = th.sin_cos();
                let wr = w * lp.exp() * s;
                for &(ph, wp) in &phis {
                    let (sp, cp) = ph.sin_cos();
                    let v: Coords = (0..3).map(|i| c * x.coords[i] + s * (cp * e[0][i] + sp * e[1][i])).collect();
                    let z = model.project(Point { coords: v });
                    sum += acc(wr * wp, &z);
                }
            }
            tail = 0.0;
        }
        ModelKind::EuclideanR(m) => {
            // mass outside the ball of radius r is below e^{-50} * poly
            let r = st * (100.0 + 4.0 * m as f64).sqrt();
            let norm = (TAU * t).powf(-0.5 * m as f64);
            let radial = rule(0.0, r, np.max(4));
            let lp = |rr: f64| norm * (-rr * rr / (2.0 * t)).exp();
            match m {
                1 => {
                    for (rr, w) in rule(-r, r, 2 * np) {
                        let z = Point::new(&[x.coords[0] + rr]);
                        sum += acc(w * lp(rr.abs()), &z);
                    }
                }
                2 => {
                    let phis = rule(0.0, TAU, na);
                    for &(rr, w) in &radial {
                        for &(ph, wp) in &phis {
                            let z = Point::new(&[x.coords[0] + rr * ph.cos(), x.coords[1] + rr * ph.sin()]);
                            sum += acc(w * wp * rr * lp(rr), &z);
                        }
                    }
                }
                3 => {
                    let dirs = sphere_directions(na);
                    for &(rr, w) in &radial {
                        for &(u, wu) in &dirs {
                            let z = Point::new(&[x.coords[0] + rr * u[0], x.coords[1] + rr * u[1], x.coords[2] + rr * u[2]]);
                            sum += acc(w * wu * rr * rr * lp(rr), &z);
                        }
                    }
                }
                _ => return Err(Error::Domain(format!("semigroup quadrature supports euclidean dimension <= 3, got {m}"))),
            }
            tail = (-50.0f64).exp();
        }
        ModelKind::HyperbolicH3 => {
            let r = t + (t * t + 100.0 * t).sqrt() + 1.0;
            let panels = np.max((r / st).ceil() as usize);
            let e = model.frame(x);
            let dirs = sphere_directions(na);
            for (rho, w) in rule(0.0, r, panels) {
                let lp = radial_log_kernel(model, t, rho, ctl)?.0;
                let sh = rho.sinh();
                let wr = w * lp.exp() * sh * sh;
                for &(u, wu) in &dirs {
                    let v: Coords = (0..4).map(|i| rho * (u[0] * e[0][i] + u[1] * e[1][i] + u[2] * e[2][i])).collect();
                    let z = model.exp_ambient(x, &v);
                    sum += acc(wr * wu, &z);
                }
            }
            tail = (-50.0f64).exp();
        }
    }
    Ok((sum, tail, fmax, nodes))
}

/// Product Gauss–Legendre nodes on the unit sphere in `(cos θ, φ)`.
fn sphere_directions(na: usize) -> Vec<([f64; 3], f64)> {
    let g = GaussLegendre::g20();
    let mut out = Vec::new();
    let hz = 2.0 / na as f64;
    let hp = TAU / (2 * na) as f64;
    for i in 0..na {
        for (u, wu) in g.on(-1.0 + i as f64 * hz, -1.0 + (i + 1) as f64 * hz) {
            let s = (1.0 - u * u).max(0.0).sqrt();
            for j in 0..2 * na {
                for (ph, wp) in g.on(j as f64 * hp, (j + 1) as f64 * hp) {
                    out.push(([s * ph.cos(), s * ph.sin(), u], wu * wp));
                }
            }
        }
    }
    out
}

/// Quadrature approximation of `P_t f(x) = ∫ p(t, x, z) f(z) dμ(z)` with
/// panel doubling until the error estimate meets `spec.tol`.
pub fn semigroup_apply<F: Fn(&Point) -> f64>(
    model: &ManifoldModel,
    t: f64,
    f: F,
    x: &Point,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    check_time(t)?;
    model.validate(x)?;
    if spec.panels == 0 || spec.angular_panels == 0 {
        return Err(Error::Config("quadrature panel counts must be positive".into()));
    }
    let (mut prev, _, _, _) = semigroup_level(model, t, &f, x, spec.panels, spec.angular_panels, &spec.series)?;
    let mut last = QuadratureResult { value: prev, error_estimate: f64::INFINITY, nodes: 0 };
    for k in 1..=spec.max_refinements.max(1) {
        let (np, na) = (spec.panels << k, spec.angular_panels << k);
        let (v, tail, fmax, nodes) = semigroup_level(model, t, &f, x, np, na, &spec.series)?;
        let err = (v - prev).abs() + tail * fmax;
        last = QuadratureResult { value: v, error_estimate: err, nodes };
        if err <= spec.tol {
            return Ok(last);
        }
        prev = v;
    }
    Err(Error::Accuracy { estimate: last.error_estimate, tolerance: spec.tol })
}

/// `|∫ p(s, x, z) p(t, z, y) dμ(z) - p(s + t, x, y)|`.
pub fn chapman_kolmogorov_defect(
    model: &ManifoldModel,
    s: f64,
    t: f64,
    x: &Point,
    y: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_time(s)?;
    check_time(t)?;
    model.validate(y)?;
    let ctl = spec.series;
    let conv = semigroup_apply(model, s, |z| log_kernel_value(model, t, z, y, &ctl).map(f64::exp).unwrap_or(f64::NAN), x, spec)?;
    if !conv.value.is_finite() {
        return Err(Error::Accuracy { estimate: f64::INFINITY, tolerance: spec.tol });
    }
    let direct = log_kernel_value(model, s + t, x, y, &ctl)?.exp();
    Ok((conv.value - direct).abs())
}

/// `|∂_t p - (1/2) Δ_x p|` at `(t, x, y)` by central differences. The
/// Laplacian is the sum of second differences along the geodesics through
/// `x` in the directions of the canonical orthonormal frame.
pub fn heat_equation_residual(
    model: &ManifoldModel,
    t: f64,
    x: &Point,
    y: &Point,
    h_t: f64,
    h_x: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_time(t)?;
    if !(h_t > 0.0 && h_t < t) || !(h_x > 0.0) {
        return Err(Error::Domain(format!("need 0 < h_t < t and h_x > 0, got h_t={h_t}, h_x={h_x}")));
    }
    model.validate(x)?;
    model.validate(y)?;
    let p = |tt: f64, z: &Point| log_kernel_value(model, tt, z, y, ctl).map(f64::exp);
    let dt = (p(t + h_t, x)? - p(t - h_t, x)?) / (2.0 * h_t);
    let p0 = p(t, x)?;
    let mut lap = 0.0;
    for e in model.frame(x) {
        let fwd: Coords = e.iter().map(|v| v * h_x).collect();
        let bwd: Coords = e.iter().map(|v| -v * h_x).collect();
        lap += (p(t, &model.exp_ambient(x, &fwd))? - 2.0 * p0 + p(t, &model.exp_ambient(x, &bwd))?) / (h_x * h_x);
    }
    Ok((dt - 0.5 * lap).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    fn models() -> Vec<ManifoldModel> {
        vec![
            ManifoldModel::euclidean(1).unwrap(),
            ManifoldModel::euclidean(2).unwrap(),
            ManifoldModel::euclidean(3).unwrap(),
            ManifoldModel::circle(),
            ManifoldModel::sphere2(),
            ManifoldModel::hyperbolic3(),
        ]
    }

    /// A point at distance `d` from the origin in the first frame direction.
    fn at_distance(m: &ManifoldModel, d: f64) -> Point {
        let o = m.origin();
        let mut c = vec![0.0; m.dim];
        c[0] = d;
        m.exp_map(&o, &TangentVector { base: o.clone(), components: Coords::from_slice(&c) })
    }

    #[test]
    fn euclidean_on_diagonal_value() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let o = m.origin();
        let k = kernel(&m, 1.0, &o, &o, &SeriesControl::default()).unwrap();
        assert_relative_eq!(k.value, 0.398_942_280_401_432_7, max_relative = 1e-14);
        assert_relative_eq!(k.value, k.log_value.exp(), max_relative = 1e-12);
    }

    #[test]
    fn h3_diagonal_limit() {
        let m = ManifoldModel::hyperbolic3();
        let expect = (TAU).powf(-1.5) * (-0.5f64).exp();
        let o = m.origin();
        let k = kernel(&m, 1.0, &o, &o, &SeriesControl::default()).unwrap();
        assert_relative_eq!(k.value, expect, max_relative = 1e-14);
        // series ρ/sinh ρ = 1 - ρ²/6 + 7ρ⁴/360 near the diagonal
        for rho in [1e-4, 1e-3, 2e-3, 0.05] {
            let (lp, _) = radial_log_kernel(&m, 1.0, rho, &SeriesControl::default()).unwrap();
            let r2 = rho * rho;
            let series = expect * (1.0 - r2 / 6.0 + 7.0 * r2 * r2 / 360.0 - 31.0 * r2 * r2 * r2 / 15120.0) * (-r2 / 2.0).exp();
            assert_relative_eq!(lp.exp(), series, max_relative = 1e-13);
        }
    }

    #[test]
    fn h3_large_distance_is_finite() {
        let m = ManifoldModel::hyperbolic3();
        let (lp, dl) = radial_log_kernel(&m, 1.0, 800.0, &SeriesControl::default()).unwrap();
        assert!(lp.is_finite() && dl.is_finite());
        assert_relative_eq!(dl, 1.0 / 800.0 - 1.0 - 800.0, max_relative = 1e-14);
    }

    #[test]
    fn nonpositive_time_is_a_domain_error() {
        let m = ManifoldModel::circle();
        let o = m.origin();
        assert!(matches!(kernel(&m, 0.0, &o, &o, &SeriesControl::default()), Err(Error::Domain(_))));
        assert!(matches!(kernel(&m, -1.0, &o, &o, &SeriesControl::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn euclidean_gradient_is_displacement_over_time() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let g = log_kernel_gradient(&m, 1.0, &Point::new(&[0.0]), &Point::new(&[1.0]), &SeriesControl::default()).unwrap();
        assert_eq!(g.components[0], 1.0);
        let m = ManifoldModel::euclidean(3).unwrap();
        let (x, y) = (Point::new(&[0.5, -1.0, 2.0]), Point::new(&[1.5, 1.0, -2.0]));
        let g = log_kernel_gradient(&m, 0.7, &x, &y, &SeriesControl::default()).unwrap();
        for i in 0..3 {
            assert_relative_eq!(g.components[i], (y.coords[i] - x.coords[i]) / 0.7, max_relative = 1e-14);
        }
    }

    #[test]
    fn gradient_vanishes_on_the_diagonal() {
        for m in models() {
            let p = at_distance(&m, 0.4);
            let g = log_kernel_gradient(&m, 0.5, &p, &p, &SeriesControl::default()).unwrap();
            assert!(g.components.iter().all(|&c| c == 0.0), "{m}");
        }
    }

    fn fd_gradient(m: &ManifoldModel, t: f64, x: &Point, y: &Point, h: f64) -> Vec<f64> {
        let ctl = SeriesControl::default();
        m.frame(x)
            .iter()
            .map(|e| {
                let f: Coords = e.iter().map(|v| v * h).collect();
                let b: Coords = e.iter().map(|v| -v * h).collect();
                let lf = log_kernel_value(m, t, &m.exp_ambient(x, &f), y, &ctl).unwrap();
                let lb = log_kernel_value(m, t, &m.exp_ambient(x, &b), y, &ctl).unwrap();
                (lf - lb) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn sphere_gradient_matches_finite_differences() {
        let m = ManifoldModel::sphere2();
        let y = m.origin();
        let x = at_distance(&m, 1.0);
        let g = log_kernel_gradient(&m, 0.3, &x, &y, &SeriesControl::default()).unwrap();
        let fd = fd_gradient(&m, 0.3, &x, &y, 1e-5);
        let err = g.components.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-5 * g.norm(), "{g:?} vs {fd:?}");
    }

    #[test]
    fn gradients_match_finite_differences_on_random_pairs() {
        let ctl = SeriesControl::default();
        for m in models() {
            let mut s = RngStream::new(7, "hk-grad", m.dim as u64 * 10 + m.chart_len() as u64);
            for _ in 0..50 {
                let t = 0.05 + 1.5 * s.uniform();
                let o = m.origin();
                let x = m.exp_map(&o, &m.sample_tangent_gaussian(&o, 0.8, &mut s).unwrap());
                let y = m.exp_map(&o, &m.sample_tangent_gaussian(&o, 0.8, &mut s).unwrap());
                let d = m.distance(&x, &y);
                if d < 0.05 || (m.kind == ModelKind::SphereS2 && d > PI - 0.1) {
                    continue;
                }
                let g = log_kernel_gradient(&m, t, &x, &y, &ctl).unwrap();
                let fd = fd_gradient(&m, t, &x, &y, 1e-5);
                for (a, b) in g.components.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * g.norm(), "{m} t={t} d={d}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cut_locus_uses_fallback() {
        let m = ManifoldModel::sphere2();
        let y = m.origin();
        let x = Point::new(&[0.0, 0.0, -1.0]);
        let k = kernel(&m, 0.5, &x, &y, &SeriesControl::default()).unwrap();
        assert!(k.cut_locus_fallback);
        // log p is flat at the antipode to first order
        assert!(k.log_grad_x.norm() < 1e-5, "{:?}", k.log_grad_x);
    }

    #[test]
    fn conservation_on_the_circle_and_euclidean_line() {
        let spec = QuadratureSpec::default();
        let m = ManifoldModel::circle();
        let x = Point::new(&[1.0]);
        for t in [0.05, 0.5, 3.0] {
            let r = semigroup_apply(&m, t, |_| 1.0, &x, &spec).unwrap();
            assert!((r.value - 1.0).abs() < 1e-10, "t={t}: {}", r.value);
        }
        let m = ManifoldModel::euclidean(1).unwrap();
        let r = semigroup_apply(&m, 0.7, |_| 1.0, &Point::new(&[2.0]), &spec).unwrap();
        assert!((r.value - 1.0).abs() < spec.tol, "{}", r.value);
    }

    #[test]
    fn normalization_all_models() {
        let spec = QuadratureSpec::default();
        for m in models() {
            let x = at_distance(&m, 0.3);
            for t in [0.1, 1.0] {
                let r = semigroup_apply(&m, t, |_| 1.0, &x, &spec).unwrap();
                assert!((r.value - 1.0).abs() < 1e-9, "{m} t={t}: {}", r.value);
            }
        }
    }

    #[test]
    fn cosine_decays_at_rate_one_half() {
        let m = ManifoldModel::circle();
        let spec = QuadratureSpec::default();
        for x0 in [0.0, 0.7, 4.0] {
            let r = semigroup_apply(&m, 1.0, |z| z.coords[0].cos(), &Point::new(&[x0]), &spec).unwrap();
            assert!((r.value - (-0.5f64).exp() * x0.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn sphere_first_harmonic_decays_at_rate_one() {
        // z-coordinate is an l = 1 eigenfunction: (1/2)Δ z = -z
        let m = ManifoldModel::sphere2();
        let x = at_distance(&m, 0.9);
        let r = semigroup_apply(&m, 0.4, |z| z.coords[2], &x, &QuadratureSpec::default()).unwrap();
        assert!((r.value - (-0.4f64).exp() * x.coords[2]).abs() < 1e-9);
    }

    #[test]
    fn chapman_kolmogorov_examples() {
        let spec = QuadratureSpec::default();
        let m = ManifoldModel::circle();
        let o = m.origin();
        assert!(chapman_kolmogorov_defect(&m, 0.5, 0.5, &o, &o, &spec).unwrap() < 1e-9);
        let m = ManifoldModel::euclidean(1).unwrap();
        assert!(chapman_kolmogorov_defect(&m, 0.3, 0.6, &Point::new(&[0.0]), &Point::new(&[0.8]), &spec).unwrap() < 1e-10);
        let m = ManifoldModel::sphere2();
        let y = at_distance(&m, 1.0);
        assert!(chapman_kolmogorov_defect(&m, 0.2, 0.3, &m.origin(), &y, &spec).unwrap() < 1e-8);
    }

    #[test]
    fn heat_equation_residuals() {
        let ctl = SeriesControl::default();
        let m = ManifoldModel::euclidean(1).unwrap();
        let r = heat_equation_residual(&m, 1.0, &Point::new(&[0.0]), &Point::new(&[1.0]), 1e-4, 1e-4, &ctl).unwrap();
        assert!(r < 1e-6, "{r}");
        let m = ManifoldModel::circle();
        let r = heat_equation_residual(&m, 0.5, &Point::new(&[0.0]), &Point::new(&[1.0]), 1e-4, 1e-4, &ctl).unwrap();
        assert!(r < 1e-6, "{r}");
        let m = ManifoldModel::hyperbolic3();
        let y = at_distance(&m, 1.0);
        let r = heat_equation_residual(&m, 1.0, &m.origin(), &y, 1e-4, 1e-4, &ctl).unwrap();
        assert!(r < 1e-5, "{r}");
        let m = ManifoldModel::sphere2();
        let y = at_distance(&m, 1.0);
        let r = heat_equation_residual(&m, 0.3, &m.origin(), &y, 1e-4, 1e-3, &ctl).unwrap();
        assert!(r < 1e-5, "{r}");
    }

    #[test]
    fn control_validation() {
        assert!(SeriesControl::default().validate().is_ok());
        assert!(SeriesControl { tol: 1e-3, ..Default::default() }.validate().is_err());
        assert!(SeriesControl { max_terms: 8, ..Default::default() }.validate().is_err());
    }
}
