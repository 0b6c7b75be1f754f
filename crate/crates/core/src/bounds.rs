//! Grid certificates for Gaussian heat kernel bounds, the logarithmic
//! gradient bound, localized kernel bounds, volume comparison, and the
//! Arnaudon–Thalmaier gradient estimate.
//!
//! Constants whose existence is asserted but whose values are not known are
//! fitted on the grid and recorded in the certificate; a later run with the
//! same grid can compare against them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_sphere_area, Coords, ManifoldModel, ModelKind, Point};
use crate::heatkernel::{radial_log_kernel, SeriesControl};

/// Fitted constants are never reported below this value.
pub const FIT_FLOOR: f64 = 1e-12;

/// A margin counts as a violation when it is below
/// `-(VIOLATION_RTOL * |LHS| + VIOLATION_ATOL)`; the absolute part only
/// matters for subnormal values.
pub const VIOLATION_RTOL: f64 = 1e-12;
pub const VIOLATION_ATOL: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InequalityId {
    GaussianUpper,
    GaussianLower,
    GradientBound,
    LocalizedKernelUpper,
    LocalizedKernelLower,
    CheegerGromov,
    VolumeDoubling,
    ArnaudonThalmaier,
}

impl InequalityId {
    pub const ALL: [InequalityId; 8] = [
        Self::GaussianUpper,
        Self::GaussianLower,
        Self::GradientBound,
        Self::LocalizedKernelUpper,
        Self::LocalizedKernelLower,
        Self::CheegerGromov,
        Self::VolumeDoubling,
        Self::ArnaudonThalmaier,
    ];

    pub fn cli_name(&self) -> &'static str {
        match self {
            Self::GaussianUpper => "gaussian-upper",
            Self::GaussianLower => "gaussian-lower",
            Self::GradientBound => "gradient",
            Self::LocalizedKernelUpper => "localized-upper",
            Self::LocalizedKernelLower => "localized-lower",
            Self::CheegerGromov => "cheeger-gromov",
            Self::VolumeDoubling => "volume-doubling",
            Self::ArnaudonThalmaier => "arnaudon-thalmaier",
        }
    }

    /// Resolves a single name or one of the groups `all`, `gaussian` and
    /// `localized`.
    pub fn select(name: &str) -> Result<Vec<InequalityId>> {
        Ok(match name {
            "all" => Self::ALL.to_vec(),
            "gaussian" => vec![Self::GaussianUpper, Self::GaussianLower],
            "localized" => vec![Self::LocalizedKernelUpper, Self::LocalizedKernelLower],
            _ => vec![name.parse()?],
        })
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|i| i.cli_name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|i| i.cli_name()).collect();
            Error::Config(format!("unknown inequality '{s}'; valid: all, gaussian, localized, {}", names.join(", ")))
        })
    }
}

/// Ball `B(center, radius)` with a Ricci lower bound `Ric >= -ricci_lower`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub center: Point,
    pub radius: f64,
    pub ricci_lower: f64,
}

impl RegionSpec {
    pub fn new(model: &ManifoldModel, center: Point, radius: f64) -> Result<Self> {
        model.validate(&center)?;
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("region radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius, ricci_lower: model.ricci_lower() })
    }

    /// Ball of radius 2 about the canonical origin.
    pub fn default_for(model: &ManifoldModel) -> Self {
        Self { center: model.origin(), radius: 2.0, ricci_lower: model.ricci_lower() }
    }
}

/// Summary of the sweep a certificate was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub n_xy: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Times added to the sweep beyond the regular grid.
    pub extra_t: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Time, or outer radius for volume inequalities.
    pub t: f64,
    /// Distance, or inner radius for volume inequalities.
    pub d: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub inequality_id: InequalityId,
    pub model: String,
    pub grid: GridInfo,
    pub fitted_constants: BTreeMap<String, f64>,
    /// Minimum over the grid of `RHS - LHS`.
    pub worst_margin: f64,
    pub violations: Vec<Violation>,
    pub pass: bool,
}

/// One grid point: `(t, d, lhs, rhs)`.
type Row = (f64, f64, f64, f64);

fn assemble(
    inequality_id: InequalityId,
    model: &ManifoldModel,
    grid: GridInfo,
    fitted_constants: BTreeMap<String, f64>,
    rows: &[Row],
) -> BoundCertificate {
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    for &(t, d, lhs, rhs) in rows {
        let margin = rhs - lhs;
        worst = worst.min(margin);
        if !(margin >= -(VIOLATION_RTOL * lhs.abs() + VIOLATION_ATOL)) {
            violations.push(Violation { t, d, lhs, rhs, margin });
        }
    }
    let constants_ok = fitted_constants.values().all(|c| c.is_finite() && *c > 0.0);
    BoundCertificate {
        inequality_id,
        model: model.name(),
        grid,
        fitted_constants,
        worst_margin: worst,
        pass: violations.is_empty() && constants_ok,
        violations,
    }
}

/// `n` log-spaced times in `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max >= t_min) || n == 0 {
        return Err(Error::Domain(format!("bad time grid [{t_min}, {t_max}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![t_min]);
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    Ok((0..n).map(|i| if i + 1 == n { t_max } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() }).collect())
}

/// `n` point pairs in `B(center, R)` placed symmetrically about the center
/// along the first frame direction, with distances evenly spaced in
/// `[0, d_max]`. `d_max` is `2R` capped at `π` on compact models, and at
/// `π - cut_band` on the sphere.
pub fn default_xy_grid(model: &ManifoldModel, region: &RegionSpec, n: usize, cut_band: f64) -> Result<Vec<(Point, Point)>> {
    if n == 0 {
        return Err(Error::Domain("empty xy grid".into()));
    }
    let mut d_max = 2.0 * region.radius * (1.0 - 1e-9);
    if model.is_compact() {
        d_max = d_max.min(PI);
    }
    if model.kind == ModelKind::SphereS2 {
        d_max = d_max.min(PI - cut_band);
    }
    let e = model.frame(&region.center)[0].clone();
    let at = |s: f64| -> Point {
        let v: Coords = e.iter().map(|c| c * s).collect();
        model.exp_ambient(&region.center, &v)
    };
    Ok((0..n)
        .map(|k| {
            let d = if n == 1 { 0.0 } else { d_max * k as f64 / (n - 1) as f64 };
            (at(-0.5 * d), at(0.5 * d))
        })
        .collect())
}

fn check_grids(model: &ManifoldModel, region: &RegionSpec, t_grid: &[f64], xy: &[(Point, Point)]) -> Result<()> {
    if t_grid.is_empty() || xy.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    if let Some(t) = t_grid.iter().find(|&&t| !(t > 0.0 && t <= region.radius)) {
        return Err(Error::Domain(format!("grid time {t} outside (0, R] with R = {}", region.radius)));
    }
    for (x, y) in xy {
        model.validate(x)?;
        model.validate(y)?;
        for p in [x, y] {
            if model.distance(&region.center, p) > region.radius * (1.0 + 1e-12) {
                return Err(Error::Domain("grid point outside the region ball".into()));
            }
        }
    }
    Ok(())
}

fn grid_info(t_grid: &[f64], distances: &[f64], extra_t: Vec<f64>) -> GridInfo {
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    GridInfo {
        t_min: fold(t_grid, f64::min, f64::INFINITY),
        t_max: fold(t_grid, f64::max, 0.0),
        n_t: t_grid.len(),
        n_xy: distances.len(),
        d_min: fold(distances, f64::min, f64::INFINITY),
        d_max: fold(distances, f64::max, 0.0),
        extra_t,
    }
}

/// Exponent constants `C2` (lower) and `C4` (upper) and, when not fitted,
/// prefactors `C1` and `C3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl GaussianConstants {
    /// Sharp exponents in the flat case, `1/2 ± 0.1` otherwise.
    pub fn default_for(model: &ManifoldModel) -> Self {
        match model.kind {
            ModelKind::EuclideanR(_) => Self { c1: 1.0, c2: 0.5, c3: 1.0, c4: 0.5 },
            _ => Self { c1: 1.0, c2: 0.6, c3: 1.0, c4: 0.4 },
        }
    }
}

/// Evaluates `log p` on the `(t, d)` product grid, row-major in `t`.
fn log_kernel_grid(model: &ManifoldModel, t_grid: &[f64], distances: &[f64], ctl: &SeriesControl) -> Result<Vec<(f64, f64, f64, f64)>> {
    let pts: Vec<(f64, f64)> = t_grid.iter().flat_map(|&t| distances.iter().map(move |&d| (t, d))).collect();
    pts.par_iter()
        .map(|&(t, d)| radial_log_kernel(model, t, d, ctl).map(|(lp, dl)| (t, d, lp, dl)))
        .collect()
}

/// Checks `C1 t^{-m/2} e^{-C2 d²/t} <= p(t,x,y) <= C3 t^{-m/2} e^{-C4 d²/t}`.
/// With `fit`, `C1` is the largest and `C3` the smallest prefactor valid on
/// the grid. Returns `(upper, lower)` certificates.
pub fn gaussian_bound_check(
    model: &ManifoldModel,
    region: &RegionSpec,
    t_grid: &[f64],
    xy_grid: &[(Point, Point)],
    constants: &GaussianConstants,
    fit: bool,
    ctl: &SeriesControl,
) -> Result<(BoundCertificate, BoundCertificate)> {
    check_grids(model, region, t_grid, xy_grid)?;
    let distances: Vec<f64> = xy_grid.iter().map(|(x, y)| model.distance(x, y)).collect();
    let vals = log_kernel_grid(model, t_grid, &distances, ctl)?;
    let half_m = 0.5 * model.dim as f64;
    // log of p t^{m/2} e^{c d²/t}
    let scaled = |c: f64| -> Vec<f64> { vals.iter().map(|&(t, d, lp, _)| lp + half_m * t.ln() + c * d * d / t).collect() };
    let (c1, c3) = if fit {
        let lo = scaled(constants.c2).into_iter().fold(f64::INFINITY, f64::min).exp();
        let hi = scaled(constants.c4).into_iter().fold(f64::NEG_INFINITY, f64::max).exp();
        (lo.max(FIT_FLOOR), hi.max(FIT_FLOOR))
    } else {
        (constants.c1, constants.c3)
    };
    let upper_rows: Vec<Row> = vals
        .iter()
        .map(|&(t, d, lp, _)| (t, d, lp.exp(), c3 * t.powf(-half_m) * (-constants.c4 * d * d / t).exp()))
        .collect();
    // lower bound: LHS is the bound, RHS the kernel
    let lower_rows: Vec<Row> = vals
        .iter()
        .map(|&(t, d, lp, _)| (t, d, c1 * t.powf(-half_m) * (-constants.c2 * d * d / t).exp(), lp.exp()))
        .collect();
    let info = grid_info(t_grid, &distances, vec![]);
    let upper = assemble(
        InequalityId::GaussianUpper,
        model,
        info.clone(),
        BTreeMap::from([("C3".to_string(), c3), ("C4".to_string(), constants.c4)]),
        &upper_rows,
    );
    let lower = assemble(
        InequalityId::GaussianLower,
        model,
        info,
        BTreeMap::from([("C1".to_string(), c1), ("C2".to_string(), constants.c2)]),
        &lower_rows,
    );
    Ok((upper, lower))
}

/// Number of small-time probes added by [`gradient_bound_check`].
pub const GRADIENT_PROBES: usize = 9;

/// Fits the smallest `C` with `|∇ log p^y(t, x)| <= C (t^{-1/2} + d(x,y)/t)`.
///
/// The supremum of the ratio is approached as `d/√t → ∞`, so the sweep is
/// extended by the times `t_min · 10^{-2k}`, `k = 1..=GRADIENT_PROBES`,
/// paired with the grid's distances.
pub fn gradient_bound_check(
    model: &ManifoldModel,
    region: &RegionSpec,
    t_grid: &[f64],
    xy_grid: &[(Point, Point)],
    ctl: &SeriesControl,
) -> Result<BoundCertificate> {
    check_grids(model, region, t_grid, xy_grid)?;
    let distances: Vec<f64> = xy_grid.iter().map(|(x, y)| model.distance(x, y)).collect();
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let probes: Vec<f64> = (1..=GRADIENT_PROBES).map(|k| t_min * 10f64.powi(-2 * k as i32)).collect();
    let mut all_t = t_grid.to_vec();
    all_t.extend(&probes);
    let vals = log_kernel_grid(model, &all_t, &distances, ctl)?;
    let rows0: Vec<(f64, f64, f64, f64)> = vals
        .iter()
        .map(|&(t, d, _, dl)| {
            let lhs = if d == 0.0 { 0.0 } else { dl.abs() };
            (t, d, lhs, t.powf(-0.5) + d / t)
        })
        .collect();
    let c = rows0.iter().map(|r| r.2 / r.3).fold(0.0, f64::max).max(FIT_FLOOR);
    let rows: Vec<Row> = rows0.iter().map(|&(t, d, lhs, b)| (t, d, lhs, c * b)).collect();
    Ok(assemble(
        InequalityId::GradientBound,
        model,
        grid_info(t_grid, &distances, probes),
        BTreeMap::from([("C".to_string(), c)]),
        &rows,
    ))
}

/// Squared right-hand side of the Arnaudon–Thalmaier gradient estimate:
/// `2 (1/S + π²(m + βm + 7)/dist² + K/(4β) + K) (4 + log(sup_u/u_val))²`.
pub fn arnaudon_thalmaier_rhs(s: f64, dist_to_boundary: f64, k: f64, beta: f64, m: usize, sup_u: f64, u_val: f64) -> Result<f64> {
    if !(s > 0.0 && dist_to_boundary > 0.0 && k >= 0.0 && beta > 0.0 && m > 0 && sup_u > 0.0 && u_val > 0.0) {
        return Err(Error::Domain("Arnaudon–Thalmaier inputs must be positive (K nonnegative)".into()));
    }
    if u_val > sup_u {
        return Err(Error::Domain(format!("u_val {u_val:e} exceeds sup_u {sup_u:e}")));
    }
    let mf = m as f64;
    let a = 1.0 / s + PI * PI * (mf + beta * mf + 7.0) / (dist_to_boundary * dist_to_boundary) + k / (4.0 * beta) + k;
    let l = 4.0 + (sup_u / u_val).ln();
    Ok(2.0 * a * l * l)
}

/// Checks `|∇ log p^y(t, x)|² <= arnaudon_thalmaier_rhs(...)` with
/// `u(s, z) = p(s + t/2, z, y)` on `[0, S] × D`, `S = t/2`,
/// `D = B(z0, 2R)`, `β = 1`, and `K` from the region. On compact models the
/// region radius must satisfy `2R < π`.
pub fn arnaudon_thalmaier_check(
    model: &ManifoldModel,
    region: &RegionSpec,
    t_grid: &[f64],
    xy_grid: &[(Point, Point)],
    ctl: &SeriesControl,
) -> Result<BoundCertificate> {
    check_grids(model, region, t_grid, xy_grid)?;
    let outer = 2.0 * region.radius;
    if model.is_compact() && outer >= PI {
        return Err(Error::Domain(format!("domain radius 2R = {outer} must be below π")));
    }
    let beta = 1.0;
    let pts: Vec<(f64, usize)> = t_grid.iter().flat_map(|&t| (0..xy_grid.len()).map(move |i| (t, i))).collect();
    let rows: Vec<Row> = pts
        .par_iter()
        .map(|&(t, i)| -> Result<Row> {
            let (x, y) = &xy_grid[i];
            let d = model.distance(x, y);
            let (lp, dl) = radial_log_kernel(model, t, d, ctl)?;
            let lhs = if d == 0.0 { 0.0 } else { dl * dl };
            // y lies in D, so the supremum over D is on the diagonal
            let mut sup_lp = f64::NEG_INFINITY;
            for k in 0..=32 {
                let s = 0.5 * t * (1.0 + k as f64 / 32.0);
                sup_lp = sup_lp.max(radial_log_kernel(model, s, 0.0, ctl)?.0);
            }
            let dist = outer - model.distance(&region.center, x);
            let ratio = (sup_lp - lp).exp().max(1.0);
            let rhs = arnaudon_thalmaier_rhs(0.5 * t, dist, region.ricci_lower, beta, model.dim, ratio, 1.0)?;
            Ok((t, d, lhs, rhs))
        })
        .collect::<Result<_>>()?;
    let distances: Vec<f64> = xy_grid.iter().map(|(x, y)| model.distance(x, y)).collect();
    Ok(assemble(
        InequalityId::ArnaudonThalmaier,
        model,
        grid_info(t_grid, &distances, vec![]),
        BTreeMap::from([("K".to_string(), region.ricci_lower.max(FIT_FLOOR)), ("beta".to_string(), beta)]),
        &rows,
    ))
}

/// `(e^{-A1 t} (μ_x μ_y)^{-1/2} e^{-A2 d²/t}, e^{A3 t} (μ_x μ_y)^{-1/2} e^{-A4 d²/t})`.
pub fn localized_kernel_bounds(mu_ball_x: f64, mu_ball_y: f64, t: f64, d_xy: f64, a: [f64; 4]) -> (f64, f64) {
    let base = (mu_ball_x * mu_ball_y).powf(-0.5);
    let g = d_xy * d_xy / t;
    ((-a[0] * t).exp() * base * (-a[1] * g).exp(), (a[2] * t).exp() * base * (-a[3] * g).exp())
}

/// Logarithms of [`localized_kernel_bounds`], finite where the bounds underflow.
fn log_localized_kernel_bounds(mu_ball_x: f64, mu_ball_y: f64, t: f64, d_xy: f64, a: [f64; 4]) -> (f64, f64) {
    let base = -0.5 * (mu_ball_x.ln() + mu_ball_y.ln());
    let g = d_xy * d_xy / t;
    (-a[0] * t + base - a[1] * g, a[2] * t + base - a[3] * g)
}

/// Fits `A1` and `A3` in [`localized_kernel_bounds`] with balls of radius
/// `√t`, given the exponents `A2` (lower) and `A4` (upper). Returns
/// `(upper, lower)` certificates.
pub fn localized_kernel_check(
    model: &ManifoldModel,
    region: &RegionSpec,
    t_grid: &[f64],
    xy_grid: &[(Point, Point)],
    a2: f64,
    a4: f64,
    ctl: &SeriesControl,
) -> Result<(BoundCertificate, BoundCertificate)> {
    check_grids(model, region, t_grid, xy_grid)?;
    let distances: Vec<f64> = xy_grid.iter().map(|(x, y)| model.distance(x, y)).collect();
    let vals = log_kernel_grid(model, t_grid, &distances, ctl)?;
    let mut a1 = FIT_FLOOR;
    let mut a3 = FIT_FLOOR;
    let mut base = Vec::with_capacity(vals.len());
    for &(t, d, lp, _) in &vals {
        let mu = model.ball_volume(t.sqrt())?;
        let (lo, hi) = log_localized_kernel_bounds(mu, mu, t, d, [0.0, a2, 0.0, a4]);
        // lower: e^{-A1 t} lo <= p  <=>  A1 >= (ln lo - ln p) / t
        a1 = a1.max((lo - lp) / t);
        a3 = a3.max((lp - hi) / t);
        base.push(mu);
    }
    let a = [a1, a2, a3, a4];
    let mut upper_rows = Vec::with_capacity(vals.len());
    let mut lower_rows = Vec::with_capacity(vals.len());
    for (&(t, d, lp, _), &mu) in vals.iter().zip(&base) {
        let (lo, hi) = localized_kernel_bounds(mu, mu, t, d, a);
        upper_rows.push((t, d, lp.exp(), hi));
        lower_rows.push((t, d, lo, lp.exp()));
    }
    let info = grid_info(t_grid, &distances, vec![]);
    let consts = |x: &str, ex: &str, v: f64, ev: f64| BTreeMap::from([(x.to_string(), v), (ex.to_string(), ev)]);
    Ok((
        assemble(InequalityId::LocalizedKernelUpper, model, info.clone(), consts("A3", "A4", a3, a4), &upper_rows),
        assemble(InequalityId::LocalizedKernelLower, model, info, consts("A1", "A2", a1, a2), &lower_rows),
    ))
}

/// `|S^m| s^m e^{√((m-1)K) s}`, with `|S^m|` the area of the unit m-sphere.
pub fn cheeger_gromov_bound(m: usize, k: f64, s: f64) -> f64 {
    let mf = m as f64;
    unit_sphere_area(m) * s.powi(m as i32) * (((mf - 1.0) * k).sqrt() * s).exp()
}

/// `(s/s')^m e^{√((m-1)K) s}`.
pub fn volume_doubling_bound(m: usize, k: f64, s: f64, s_prime: f64) -> Result<f64> {
    if !(s_prime > 0.0 && s_prime < s) {
        return Err(Error::Domain(format!("need 0 < s' < s, got s={s}, s'={s_prime}")));
    }
    let mf = m as f64;
    Ok((s / s_prime).powi(m as i32) * (((mf - 1.0) * k).sqrt() * s).exp())
}

/// Checks `μ(B(x, s)) <= cheeger_gromov_bound(m, K, s)` for each radius.
pub fn cheeger_gromov_check(model: &ManifoldModel, k: f64, radii: &[f64]) -> Result<BoundCertificate> {
    if radii.is_empty() {
        return Err(Error::Domain("empty radius grid".into()));
    }
    let rows: Vec<Row> = radii
        .iter()
        .map(|&s| Ok((s, 0.0, model.ball_volume(s)?, cheeger_gromov_bound(model.dim, k, s))))
        .collect::<Result<_>>()?;
    Ok(assemble(
        InequalityId::CheegerGromov,
        model,
        grid_info(radii, &[0.0], vec![]),
        BTreeMap::from([("K".to_string(), k.max(FIT_FLOOR)), ("unit_sphere_area".to_string(), unit_sphere_area(model.dim))]),
        &rows,
    ))
}

/// Checks `μ(B(x, s)) <= μ(B(x, s')) · volume_doubling_bound(m, K, s, s')`
/// for all pairs `s' < s` from `radii`.
pub fn volume_doubling_check(model: &ManifoldModel, k: f64, radii: &[f64]) -> Result<BoundCertificate> {
    let mut rows = Vec::new();
    for &s in radii {
        for &sp in radii.iter().filter(|&&r| r < s) {
            let lhs = model.ball_volume(s)?;
            rows.push((s, sp, lhs, model.ball_volume(sp)? * volume_doubling_bound(model.dim, k, s, sp)?));
        }
    }
    if rows.is_empty() {
        return Err(Error::Domain("volume doubling needs two distinct radii".into()));
    }
    Ok(assemble(
        InequalityId::VolumeDoubling,
        model,
        grid_info(radii, radii, vec![]),
        BTreeMap::from([("K".to_string(), k.max(FIT_FLOOR))]),
        &rows,
    ))
}

/// Radii for the volume sweeps: `n` points in `(0, s_max]`, below `π` on
/// compact models.
pub fn default_radii(model: &ManifoldModel, n: usize) -> Vec<f64> {
    let s_max = if model.is_compact() { PI * 0.999 } else { 3.0 };
    (1..=n).map(|i| s_max * i as f64 / n as f64).collect()
}

/// Runs one inequality with the default grids for `model`.
pub fn certify(
    model: &ManifoldModel,
    inequality: InequalityId,
    t_min: f64,
    t_max: f64,
    n_t: usize,
    n_xy: usize,
    ctl: &SeriesControl,
) -> Result<BoundCertificate> {
    let mut region = RegionSpec::default_for(model);
    region.radius = region.radius.max(t_max);
    if inequality == InequalityId::ArnaudonThalmaier && model.is_compact() {
        region.radius = 1.5;
    }
    let t_grid = log_grid(t_min, t_max, n_t)?;
    let xy = || default_xy_grid(model, &region, n_xy, 0.1);
    match inequality {
        InequalityId::GaussianUpper | InequalityId::GaussianLower => {
            let (u, l) = gaussian_bound_check(model, &region, &t_grid, &xy()?, &GaussianConstants::default_for(model), true, ctl)?;
            Ok(if inequality == InequalityId::GaussianUpper { u } else { l })
        }
        InequalityId::GradientBound => gradient_bound_check(model, &region, &t_grid, &xy()?, ctl),
        InequalityId::ArnaudonThalmaier => {
            if region.radius < t_max {
                return Err(Error::Domain(format!(
                    "on compact models the Arnaudon–Thalmaier sweep needs t_max <= {}",
                    region.radius
                )));
            }
            arnaudon_thalmaier_check(model, &region, &t_grid, &xy()?, ctl)
        }
        InequalityId::LocalizedKernelUpper | InequalityId::LocalizedKernelLower => {
            let c = GaussianConstants::default_for(model);
            let (u, l) = localized_kernel_check(model, &region, &t_grid, &xy()?, c.c2, c.c4, ctl)?;
            Ok(if inequality == InequalityId::LocalizedKernelUpper { u } else { l })
        }
        InequalityId::CheegerGromov => cheeger_gromov_check(model, region.ricci_lower, &default_radii(model, n_xy)),
        InequalityId::VolumeDoubling => volume_doubling_check(model, region.ricci_lower, &default_radii(model, n_xy)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    fn setup(model: &ManifoldModel, n_t: usize, n_xy: usize) -> (RegionSpec, Vec<f64>, Vec<(Point, Point)>) {
        let region = RegionSpec::default_for(model);
        let t = log_grid(0.01, 2.0, n_t).unwrap();
        let xy = default_xy_grid(model, &region, n_xy, 0.1).unwrap();
        (region, t, xy)
    }

    #[test]
    fn euclidean_gaussian_bounds_are_equalities() {
        for m in 1..=3 {
            let model = ManifoldModel::euclidean(m).unwrap();
            let (region, t, xy) = setup(&model, 20, 20);
            let (u, l) = gaussian_bound_check(&model, &region, &t, &xy, &GaussianConstants::default_for(&model), true, &ctl()).unwrap();
            let c = std::f64::consts::TAU.powf(-0.5 * m as f64);
            assert_relative_eq!(u.fitted_constants["C3"], c, max_relative = 1e-13);
            assert_relative_eq!(l.fitted_constants["C1"], c, max_relative = 1e-13);
            assert!(u.pass && l.pass, "{:?} {:?}", u.violations.first(), l.violations.first());
            assert!(u.worst_margin.abs() < 1e-12 && l.worst_margin.abs() < 1e-12, "{} {}", u.worst_margin, l.worst_margin);
        }
    }

    #[test]
    fn curved_gaussian_certificates_pass() {
        for model in [ManifoldModel::circle(), ManifoldModel::sphere2(), ManifoldModel::hyperbolic3()] {
            let (region, t, xy) = setup(&model, 40, 40);
            let (u, l) = gaussian_bound_check(&model, &region, &t, &xy, &GaussianConstants::default_for(&model), true, &ctl()).unwrap();
            assert!(u.pass && l.pass, "{model}: {:?} {:?}", u.violations.first(), l.violations.first());
            assert!(u.fitted_constants["C3"].is_finite());
        }
    }

    #[test]
    fn sphere_upper_bound_with_perturbed_exponent_small_times() {
        let model = ManifoldModel::sphere2();
        let region = RegionSpec::default_for(&model);
        let t = log_grid(0.01, 0.1, 20).unwrap();
        let xy = default_xy_grid(&model, &region, 20, 0.1).unwrap();
        let c = GaussianConstants { c1: 1.0, c2: 0.6, c3: 1.0, c4: 0.6 };
        let (u, _) = gaussian_bound_check(&model, &region, &t, &xy, &c, true, &ctl()).unwrap();
        assert!(u.pass && u.fitted_constants["C3"].is_finite());
    }

    #[test]
    fn unfitted_constants_can_fail() {
        let model = ManifoldModel::euclidean(1).unwrap();
        let (region, t, xy) = setup(&model, 5, 5);
        let c = GaussianConstants { c1: 1.0, c2: 0.5, c3: 0.1, c4: 0.5 };
        let (u, l) = gaussian_bound_check(&model, &region, &t, &xy, &c, false, &ctl()).unwrap();
        assert!(!u.pass && !u.violations.is_empty());
        assert!(!l.pass);
    }

    #[test]
    fn empty_grid_is_a_domain_error() {
        let model = ManifoldModel::circle();
        let region = RegionSpec::default_for(&model);
        let c = GaussianConstants::default_for(&model);
        assert!(matches!(gaussian_bound_check(&model, &region, &[], &[], &c, true, &ctl()), Err(Error::Domain(_))));
        assert!(matches!(gradient_bound_check(&model, &region, &[0.1], &[], &ctl()), Err(Error::Domain(_))));
    }

    #[test]
    fn euclidean_gradient_constant_is_one() {
        let model = ManifoldModel::euclidean(1).unwrap();
        let (region, t, xy) = setup(&model, 40, 40);
        let cert = gradient_bound_check(&model, &region, &t, &xy, &ctl()).unwrap();
        assert!(cert.pass);
        assert!((cert.fitted_constants["C"] - 1.0).abs() < 1e-9, "{}", cert.fitted_constants["C"]);
        assert!(cert.worst_margin >= 0.0);
    }

    #[test]
    fn gradient_margin_on_diagonal() {
        let model = ManifoldModel::sphere2();
        let region = RegionSpec::default_for(&model);
        let o = model.origin();
        let cert = gradient_bound_check(&model, &region, &[0.25], &[(o.clone(), o)], &ctl()).unwrap();
        assert!(cert.pass);
        // only the probes and the grid time; all at d = 0 with LHS = 0
        assert!(cert.worst_margin >= cert.fitted_constants["C"] * 2.0 - 1e-15);
    }

    #[test]
    fn h3_gradient_constant_baseline() {
        let model = ManifoldModel::hyperbolic3();
        let (region, t, xy) = setup(&model, 40, 40);
        let cert = gradient_bound_check(&model, &region, &t, &xy, &ctl()).unwrap();
        assert!(cert.pass);
        assert!(cert.fitted_constants["C"] <= 3.0, "{}", cert.fitted_constants["C"]);
    }

    #[test]
    fn arnaudon_thalmaier_formula() {
        let v = arnaudon_thalmaier_rhs(1.0, PI, 0.0, 1.0, 1, 2.0, 2.0).unwrap();
        assert_relative_eq!(v, 320.0, max_relative = 1e-14);
        let a = arnaudon_thalmaier_rhs(1.0, 1.0, 0.5, 1.0, 2, 3.0, 1.0).unwrap();
        let b = arnaudon_thalmaier_rhs(1.0, 1.0, 0.5, 1.0, 2, 6.0, 1.0).unwrap();
        assert!(b > a);
        assert!(matches!(arnaudon_thalmaier_rhs(1.0, 1.0, 0.0, 1.0, 1, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn arnaudon_thalmaier_holds_on_circle_and_sphere() {
        for model in [ManifoldModel::circle(), ManifoldModel::sphere2()] {
            let region = RegionSpec { radius: 1.5, ..RegionSpec::default_for(&model) };
            let t = log_grid(0.1, 1.0, 20).unwrap();
            let xy = default_xy_grid(&model, &region, 20, 0.1).unwrap();
            let cert = arnaudon_thalmaier_check(&model, &region, &t, &xy, &ctl()).unwrap();
            assert!(cert.pass, "{model}: {:?}", cert.violations.first());
        }
    }

    #[test]
    fn localized_bounds_examples() {
        let (lo, hi) = localized_kernel_bounds(2.0, 8.0, 0.3, 0.0, [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(lo, 0.25);
        assert_eq!(hi, 0.25);
        // circle on the diagonal: both bounds are of order μ(B(x, √t))^{-1}
        let model = ManifoldModel::circle();
        for t in [1e-2f64, 1e-4, 1e-6] {
            let mu = model.ball_volume(t.sqrt()).unwrap();
            let p = radial_log_kernel(&model, t, 0.0, &ctl()).unwrap().0.exp();
            let (lo, hi) = localized_kernel_bounds(mu, mu, t, 0.0, [0.0; 4]);
            assert_relative_eq!(lo, 1.0 / mu);
            assert_relative_eq!(hi, 1.0 / mu);
            assert_relative_eq!(p * mu, 2.0 / std::f64::consts::TAU.sqrt(), max_relative = 1e-6);
        }
        let region = RegionSpec::default_for(&model);
        let xy = default_xy_grid(&model, &region, 20, 0.1).unwrap();
        let (u, l) = localized_kernel_check(&model, &region, &[0.1], &xy, 0.6, 0.4, &ctl()).unwrap();
        assert!(u.pass && l.pass);
    }

    #[test]
    fn volume_comparisons() {
        assert_relative_eq!(cheeger_gromov_bound(1, 0.0, 1.0), std::f64::consts::TAU);
        let h3 = ManifoldModel::hyperbolic3();
        for s in [0.5, 1.0, 2.0] {
            assert!(cheeger_gromov_bound(3, 2.0, s) >= h3.ball_volume(s).unwrap());
        }
        // small balls: ratio tends to |S^m| / ω_m
        let e2 = ManifoldModel::euclidean(2).unwrap();
        assert_relative_eq!(cheeger_gromov_bound(2, 0.0, 1e-3) / e2.ball_volume(1e-3).unwrap(), 4.0, max_relative = 1e-12);
        let v = volume_doubling_bound(3, 2.0, 2.0, 1.0).unwrap();
        assert!(v >= h3.ball_volume(2.0).unwrap() / h3.ball_volume(1.0).unwrap());
        assert!(volume_doubling_bound(2, 0.0, 1.0, 1.0).is_err());
        assert!(volume_doubling_bound(2, 0.5, 1.0, 1.0 - 1e-12).unwrap() >= 1.0);
        for model in [e2, ManifoldModel::circle(), ManifoldModel::sphere2(), h3] {
            let r = default_radii(&model, 30);
            let cg = cheeger_gromov_check(&model, model.ricci_lower(), &r).unwrap();
            let vd = volume_doubling_check(&model, model.ricci_lower(), &r).unwrap();
            assert!(cg.pass && vd.pass, "{model}");
        }
        let e3 = ManifoldModel::euclidean(3).unwrap();
        let vd = volume_doubling_check(&e3, 0.0, &default_radii(&e3, 10)).unwrap();
        assert!(vd.worst_margin.abs() < 1e-12 * 1e3);
    }

    #[test]
    fn inequality_names_round_trip() {
        for i in InequalityId::ALL {
            assert_eq!(i.cli_name().parse::<InequalityId>().unwrap(), i);
        }
        assert!("nope".parse::<InequalityId>().is_err());
    }
}
