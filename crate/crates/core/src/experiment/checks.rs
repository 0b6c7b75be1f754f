//! The acceptance checks, one function per criterion. Each returns a
//! [`CriterionResult`] whose `details` carry the measured quantities next to
//! their tolerances. Sizes are set by [`Sizes`]; randomness comes from named
//! streams under one seed.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{certify, InequalityId};
use crate::bridge::{
    fdd_log_density, markov_defect, sample_bridge_sde, BridgePath, BridgeSpec, ExactSampler, Functional, SdeOptions,
    TimeGrid,
};
use crate::error::Result;
use crate::geometry::{Coords, ManifoldModel, ModelKind, Point};
use crate::heatkernel::{
    chapman_kolmogorov_defect, circle, heat_equation_residual, log_kernel_gradient, log_kernel_value, QuadratureSpec,
    SeriesControl,
};
use crate::lift::{holonomy, horizontal_lift, rotation_angle, Frame};
use crate::quadrature::GaussLegendre;
use crate::rng::RngStream;
use crate::semimart::{
    exit_time_localization, integrability_estimate, localization_gap, martingale_test_exact, standard_suite, Battery,
    TestFunction,
};
use crate::stats::{chi_square, ks_two_sample, Moments};

pub const DUAL_SERIES_TOL: f64 = 1e-10;
pub const CK_TOL: f64 = 1e-8;
pub const HEAT_RESIDUAL_TOL: f64 = 1e-5;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const FITTED_C_TOL: f64 = 1e-9;
pub const KS_ALPHA: f64 = 0.01;
pub const CHI2_ALPHA: f64 = 0.01;
pub const VARIANCE_SE: f64 = 3.0;
pub const REFINEMENT_RATIO: f64 = 0.9;
pub const LOCALIZATION_TOL: f64 = 1e-12;
pub const HOLONOMY_TOL: f64 = 1e-6;
pub const LIFT_PRE_TOL: f64 = 1e-3;
pub const LIFT_POST_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub model: String,
    pub pass: bool,
    pub details: Value,
}

impl CriterionResult {
    fn new(id: u32, name: &str, model: &ManifoldModel, pass: bool, details: Value) -> Self {
        Self { id, name: name.into(), model: model.name(), pass, details }
    }

    /// One summary line, `PASS`/`FAIL` first.
    pub fn line(&self) -> String {
        format!("{} criterion {:>2} {:<22} {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.model)
    }
}

/// Monte Carlo sizes of the suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub gradient_samples: usize,
    pub certificate_n_t: usize,
    pub certificate_n_xy: usize,
    pub law_paths: u64,
    pub dt: f64,
    pub markov_outer: usize,
    pub markov_inner: usize,
    pub semimart_paths: u64,
    pub refine_paths: u64,
    pub exit_paths: usize,
    pub lift_paths: usize,
}

impl Sizes {
    /// Full desk-scale sizes.
    pub fn full() -> Self {
        Self {
            gradient_samples: 1000,
            certificate_n_t: 40,
            certificate_n_xy: 40,
            law_paths: 100_000,
            dt: 1e-3,
            markov_outer: 10_000,
            markov_inner: 100,
            semimart_paths: 100_000,
            refine_paths: 20_000,
            exit_paths: 1000,
            lift_paths: 200,
        }
    }

    /// Sizes scaled from one path count: law, martingale and Markov runs use
    /// `paths` outer samples, refinement a fifth of that.
    pub fn scaled(paths: u64, dt: f64, inner: usize) -> Self {
        let full = Self::full();
        Self {
            law_paths: paths,
            dt,
            markov_outer: paths as usize,
            markov_inner: inner,
            semimart_paths: paths,
            refine_paths: (paths / 5).max(200),
            exit_paths: full.exit_paths.min(paths as usize),
            lift_paths: full.lift_paths.min(paths as usize),
            ..full
        }
    }
}

/// Default pair of distinct endpoints: `y` at distance 1 from the origin
/// along the first frame direction, except on the circle (`y = π`) and the
/// sphere (`y` on the equator).
pub fn default_endpoints(model: &ManifoldModel) -> (Point, Point) {
    let o = model.origin();
    let y = match model.kind {
        ModelKind::CircleS1 => Point::new(&[PI]),
        ModelKind::SphereS2 => Point::new(&[1.0, 0.0, 0.0]),
        _ => {
            let mut c = vec![0.0; model.dim];
            c[0] = 1.0;
            model.exp_ambient(&o, &model.to_ambient(&o, &c))
        }
    };
    (o, y)
}

fn seeded(seed: u64, purpose: &str, i: u64) -> RngStream {
    RngStream::new(seed, purpose, i)
}

/// Point at geodesic distance `d` from the origin along the first frame
/// direction.
fn at_distance(model: &ManifoldModel, d: f64) -> Point {
    let o = model.origin();
    let mut c = vec![0.0; model.dim];
    c[0] = d;
    model.exp_ambient(&o, &model.to_ambient(&o, &c))
}

/// Criterion 1: dual series on the circle, Chapman–Kolmogorov on the
/// circle, sphere and low-dimensional Euclidean spaces, and the heat
/// equation residual everywhere.
pub fn kernel_exactness(model: &ManifoldModel, ctl: &SeriesControl) -> Result<CriterionResult> {
    let mut details = serde_json::Map::new();
    let mut pass = true;
    if model.kind == ModelKind::CircleS1 {
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let t = 0.05 * 100f64.powf(i as f64 / 19.0);
            for k in 0..20 {
                let d = -PI + TAU * (k as f64 + 0.5) / 20.0;
                let a = circle::wrapped(t, d, ctl)?.0;
                let b = circle::fourier(t, d, ctl)?.0;
                worst = worst.max((a - b).abs());
            }
        }
        pass &= worst <= DUAL_SERIES_TOL;
        details.insert("dual_series_max_diff".into(), json!(worst));
        details.insert("dual_series_tol".into(), json!(DUAL_SERIES_TOL));
    }
    let ck_applies = match model.kind {
        ModelKind::EuclideanR(m) => m <= 3,
        ModelKind::CircleS1 | ModelKind::SphereS2 => true,
        ModelKind::HyperbolicH3 => false,
    };
    if ck_applies {
        let spec = QuadratureSpec::default();
        let o = model.origin();
        let cases: Vec<(f64, f64, f64)> = vec![(0.2, 0.3, 0.0), (0.2, 0.3, 1.0), (0.5, 0.5, 2.5), (1.0, 0.7, 1.5), (0.1, 0.05, 0.4)];
        let mut worst: f64 = 0.0;
        for &(s, t, d) in &cases {
            worst = worst.max(chapman_kolmogorov_defect(model, s, t, &o, &at_distance(model, d), &spec)?);
        }
        pass &= worst <= CK_TOL;
        details.insert("chapman_kolmogorov_max_defect".into(), json!(worst));
        details.insert("chapman_kolmogorov_cases".into(), json!(cases.len()));
        details.insert("chapman_kolmogorov_tol".into(), json!(CK_TOL));
    }
    let h_x = if model.kind == ModelKind::SphereS2 { 1e-3 } else { 1e-4 };
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for t in [0.3, 0.7, 1.5] {
        for d in [0.0, 0.5, 1.0, 2.0] {
            let r = heat_equation_residual(model, t, &model.origin(), &at_distance(model, d), 1e-4, h_x, ctl)?;
            worst = worst.max(r);
            cases += 1;
        }
    }
    pass &= worst <= HEAT_RESIDUAL_TOL;
    details.insert("heat_residual_max".into(), json!(worst));
    details.insert("heat_residual_cases".into(), json!(cases));
    details.insert("heat_residual_tol".into(), json!(HEAT_RESIDUAL_TOL));
    Ok(CriterionResult::new(1, "kernel-exactness", model, pass, Value::Object(details)))
}

fn fd_log_gradient(model: &ManifoldModel, t: f64, x: &Point, y: &Point, h: f64, ctl: &SeriesControl) -> Result<Vec<f64>> {
    model
        .frame(x)
        .iter()
        .map(|e| {
            let f: Coords = e.iter().map(|v| v * h).collect();
            let b: Coords = e.iter().map(|v| -v * h).collect();
            let lf = log_kernel_value(model, t, &model.exp_ambient(x, &f), y, ctl)?;
            let lb = log_kernel_value(model, t, &model.exp_ambient(x, &b), y, ctl)?;
            Ok((lf - lb) / (2.0 * h))
        })
        .collect()
}

/// Criterion 2: kernel log-gradients against central differences on random
/// `(t, x, y)` with `t ∈ [0.05, 1.55]`, away from the diagonal and the cut
/// locus. The error is measured relative to the gradient norm.
pub fn gradient_correctness(model: &ManifoldModel, samples: usize, seed: u64, ctl: &SeriesControl) -> Result<CriterionResult> {
    let mut s = seeded(seed, "gradient-check", 0);
    let o = model.origin();
    let mut cases = Vec::with_capacity(samples);
    while cases.len() < samples {
        let t = 0.05 + 1.5 * s.uniform();
        let x = model.exp_map(&o, &model.sample_tangent_gaussian(&o, 0.8, &mut s)?);
        let y = model.exp_map(&o, &model.sample_tangent_gaussian(&o, 0.8, &mut s)?);
        let d = model.distance(&x, &y);
        if d < 0.05 || (model.is_compact() && d > PI - 0.1) {
            continue;
        }
        cases.push((t, x, y));
    }
    let errs: Vec<f64> = cases
        .par_iter()
        .map(|(t, x, y)| {
            let g = log_kernel_gradient(model, *t, x, y, ctl)?;
            let fd = fd_log_gradient(model, *t, x, y, 1e-5, ctl)?;
            let e = g.components.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(e / g.norm())
        })
        .collect::<Result<_>>()?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(CriterionResult::new(
        2,
        "gradient-correctness",
        model,
        worst <= GRADIENT_REL_TOL,
        json!({ "samples": samples, "max_rel_error": worst, "tol": GRADIENT_REL_TOL }),
    ))
}

fn certificate_summary(c: &crate::bounds::BoundCertificate) -> Value {
    json!({
        "inequality": c.inequality_id.cli_name(),
        "pass": c.pass,
        "violations": c.violations.len(),
        "worst_margin": c.worst_margin,
        "fitted_constants": c.fitted_constants,
    })
}

/// Criterion 3: Gaussian upper and lower bounds and the logarithmic
/// gradient bound on the default grid; on Euclidean space the fitted
/// gradient constant must be 1.
pub fn heat_kernel_certificates(model: &ManifoldModel, n_t: usize, n_xy: usize, ctl: &SeriesControl) -> Result<CriterionResult> {
    let mut pass = true;
    let mut certs = Vec::new();
    for id in [InequalityId::GaussianUpper, InequalityId::GaussianLower, InequalityId::GradientBound] {
        let c = certify(model, id, 0.01, 2.0, n_t, n_xy, ctl)?;
        pass &= c.pass;
        if id == InequalityId::GradientBound && matches!(model.kind, ModelKind::EuclideanR(_)) {
            pass &= (c.fitted_constants["C"] - 1.0).abs() <= FITTED_C_TOL;
        }
        certs.push(certificate_summary(&c));
    }
    Ok(CriterionResult::new(3, "heat-kernel-bounds", model, pass, json!({ "certificates": certs, "fitted_c_tol": FITTED_C_TOL })))
}

/// Criterion 4: the Arnaudon–Thalmaier estimate on the compact models.
pub fn arnaudon_thalmaier(model: &ManifoldModel, n_t: usize, n_xy: usize, ctl: &SeriesControl) -> Result<CriterionResult> {
    let c = certify(model, InequalityId::ArnaudonThalmaier, 0.01, 1.5, n_t, n_xy, ctl)?;
    Ok(CriterionResult::new(4, "arnaudon-thalmaier", model, c.pass, json!({ "certificates": [certificate_summary(&c)] })))
}

/// Criterion 5: Cheeger–Gromov and volume doubling against exact ball
/// volumes.
pub fn volume_comparison(model: &ManifoldModel, n: usize, ctl: &SeriesControl) -> Result<CriterionResult> {
    let mut pass = true;
    let mut certs = Vec::new();
    for id in [InequalityId::CheegerGromov, InequalityId::VolumeDoubling] {
        let c = certify(model, id, 0.01, 2.0, n, n, ctl)?;
        pass &= c.pass;
        certs.push(certificate_summary(&c));
    }
    Ok(CriterionResult::new(5, "volume-comparison", model, pass, json!({ "certificates": certs })))
}

/// `(paths[i])` sampled in parallel and reduced by `f`, in index order.
fn sample_map<F, T>(n: u64, sample: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T> + Sync + Send,
    T: Send,
{
    (0..n).into_par_iter().map(sample).collect()
}

/// Criterion 6 on Euclidean space: `Var(X_{T/2}) = T/4` per coordinate for
/// the bridge from 0 to 0, and the guided SDE's `X_{T/2}` against the exact
/// sampler's by a two-sample KS test.
pub fn bridge_law_euclidean(model: &ManifoldModel, paths: u64, dt: f64, seed: u64) -> Result<CriterionResult> {
    let o = model.origin();
    let horizon = 1.0;
    let spec = BridgeSpec::new(*model, o.clone(), o, horizon)?;
    let sampler = ExactSampler::new(spec.clone(), TimeGrid::uniform(horizon, 2)?)?;
    let exact = sample_map(paths, |i| Ok(sampler.sample(&mut seeded(seed, "law-exact", i))?.points[1].coords[0]))?;
    let mid = ((horizon / dt / 2.0).round() as usize).max(1);
    let grid = TimeGrid::uniform(horizon, 2 * mid)?;
    let sde = sample_map(paths, |i| Ok(sample_bridge_sde(&spec, &grid, &mut seeded(seed, "law-sde", i))?.points[mid].coords[0]))?;
    let sq: Moments = exact.iter().map(|v| v * v).collect();
    let target = horizon / 4.0;
    let var_ok = (sq.mean() - target).abs() <= VARIANCE_SE * sq.se();
    let ks = ks_two_sample(&exact, &sde);
    Ok(CriterionResult::new(
        6,
        "bridge-law",
        model,
        var_ok && ks.p_value >= KS_ALPHA,
        json!({
            "paths": paths,
            "variance": sq.mean(),
            "variance_se": sq.se(),
            "variance_target": target,
            "variance_threshold_se": VARIANCE_SE,
            "sde_dt": horizon / grid.steps() as f64,
            "ks_statistic": ks.statistic,
            "ks_p_value": ks.p_value,
            "alpha": KS_ALPHA,
        }),
    ))
}

/// Criterion 6 on the circle: histogram of `X_{T/2}` against the one-point
/// bridge density integrated over the bins.
pub fn bridge_law_circle(paths: u64, seed: u64, ctl: &SeriesControl) -> Result<CriterionResult> {
    let model = ManifoldModel::circle();
    let (x, y) = default_endpoints(&model);
    let spec = BridgeSpec::new(model, x, y, 1.0)?;
    let grid = TimeGrid::uniform(1.0, 2)?;
    let sampler = ExactSampler::new(spec.clone(), grid.clone())?;
    let bins = 50;
    let vals = sample_map(paths, |i| Ok(sampler.sample(&mut seeded(seed, "law-circle", i))?.points[1].coords[0]))?;
    let mut counts = vec![0u64; bins];
    for v in vals {
        counts[((v / TAU * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let g = GaussLegendre::g20();
    let expected: Vec<f64> = (0..bins)
        .map(|k| {
            let (a, b) = (k as f64 * TAU / bins as f64, (k + 1) as f64 * TAU / bins as f64);
            let mut err = None;
            let mass = g.integrate(a, b, |z| match fdd_log_density(&spec, &grid, &[Point::new(&[z])], ctl) {
                Ok(v) => v.exp(),
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            });
            err.map_or(Ok(paths as f64 * mass), Err)
        })
        .collect::<Result<_>>()?;
    let r = chi_square(&counts, &expected);
    Ok(CriterionResult::new(
        6,
        "bridge-law",
        &model,
        r.p_value >= CHI2_ALPHA,
        json!({ "paths": paths, "bins": bins, "chi_square": r.statistic, "dof": r.dof, "p_value": r.p_value, "alpha": CHI2_ALPHA }),
    ))
}

/// Real functional used by the reversal test.
fn scalar(model: &ManifoldModel, p: &Point) -> f64 {
    p.coords[if model.kind == ModelKind::HyperbolicH3 { 1 } else { 0 }]
}

/// Criterion 7: `X_{T/3}` of the `(x, y)` bridge against `X_{2T/3}` of the
/// `(y, x)` bridge, by a two-sample KS test. Each marginal is drawn by the
/// exact sampler on a grid where it is the first step.
pub fn time_reversal(model: &ManifoldModel, paths: u64, seed: u64) -> Result<CriterionResult> {
    let (x, y) = default_endpoints(model);
    let horizon = 1.0;
    let fwd = ExactSampler::new(BridgeSpec::new(*model, x.clone(), y.clone(), horizon)?, TimeGrid::from_times(vec![0.0, horizon / 3.0, horizon])?)?;
    let bwd = ExactSampler::new(BridgeSpec::new(*model, y, x, horizon)?, TimeGrid::from_times(vec![0.0, 2.0 * horizon / 3.0, horizon])?)?;
    let a = sample_map(paths, |i| Ok(scalar(model, &fwd.sample(&mut seeded(seed, "reversal-fwd", i))?.points[1])))?;
    let b = sample_map(paths, |i| Ok(scalar(model, &bwd.sample(&mut seeded(seed, "reversal-bwd", i))?.points[1])))?;
    let ks = ks_two_sample(&a, &b);
    Ok(CriterionResult::new(
        7,
        "time-reversal",
        model,
        ks.p_value >= KS_ALPHA,
        json!({ "paths": paths, "ks_statistic": ks.statistic, "ks_p_value": ks.p_value, "alpha": KS_ALPHA }),
    ))
}

/// Standard Markov pairs `(Φ, Ψ)` on a grid of `n` steps with `S = n/2`:
/// `Φ` reads before or at `S`, `Ψ` at the step after `S`.
pub fn markov_pairs(model: &ManifoldModel, n: usize) -> Vec<(Functional, Functional)> {
    let s = n / 2;
    let (a, b): (fn(usize) -> Functional, fn(usize) -> Functional) = if model.kind == ModelKind::CircleS1 {
        (|i| Functional::Cos { index: i }, |i| Functional::Sin { index: i })
    } else {
        (|i| Functional::Coordinate { index: i, coord: 0 }, |i| Functional::Cos { index: i })
    };
    vec![(a(s - 1), a(s + 1)), (a(s), a(s + 1)), (b(s - 1), b(s + 1)), (a(s - 1), b(s + 1))]
}

/// Criterion 8: the nested Monte Carlo Markov defect on a four-step grid,
/// `S = T/2`.
pub fn markov_property(model: &ManifoldModel, outer: usize, inner: usize, seed: u64) -> Result<CriterionResult> {
    let (x, y) = default_endpoints(model);
    let n = 4;
    let sampler = ExactSampler::new(BridgeSpec::new(*model, x, y, 1.0)?, TimeGrid::uniform(1.0, n)?)?;
    let paths: Vec<BridgePath> = sample_map(outer as u64, |i| sampler.sample(&mut seeded(seed, "markov-outer", i)))?;
    let budget = outer as u64 * inner as u64;
    let mut reports = Vec::new();
    for (k, (phi, psi)) in markov_pairs(model, n).iter().enumerate() {
        reports.push(markov_defect(&paths, n / 2, phi, psi, inner, budget, crate::rng::stream_id(seed, "markov-pair", k as u64))?);
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok(CriterionResult::new(8, "markov-property", model, pass, json!({ "reports": reports })))
}

/// Criterion 9: martingale battery for the standard suite on exact-marginal
/// paths, plus integrability on guided-SDE paths with refinement over
/// `dt, dt/2, dt/4`.
pub fn semimartingale(model: &ManifoldModel, paths: u64, refine_paths: u64, dt: f64, seed: u64) -> Result<CriterionResult> {
    let (x, y) = default_endpoints(model);
    let horizon = 1.0;
    let spec = BridgeSpec::new(*model, x.clone(), y.clone(), horizon)?;
    let steps = 4 * ((horizon / dt / 4.0).round() as usize).max(1);
    let grid = TimeGrid::uniform(horizon, steps)?;
    let fs = standard_suite(model, &x, &y);
    let battery = Battery::default_for(model, &grid)?;
    let opts = SdeOptions::default();
    let sampler = ExactSampler::with_control(spec.clone(), grid, opts.series)?;
    let reports = martingale_test_exact(&sampler, &fs, &battery, paths, seed, &opts.series)?;
    let refinement = integrability_estimate(&spec, steps, 3, &fs, refine_paths, seed, &opts)?;
    let pass = reports.iter().all(|r| r.pass) && refinement.iter().all(|r| r.finite && r.stabilizes);
    Ok(CriterionResult::new(
        9,
        "semimartingale",
        model,
        pass,
        json!({
            "paths": paths,
            "refine_paths": refine_paths,
            "dt": horizon / steps as f64,
            "sampler": "exact",
            "refinement_ratio_bound": REFINEMENT_RATIO,
            "martingale": reports,
            "integrability": refinement,
        }),
    ))
}

/// Criterion 10: exit indices are nondecreasing in the radius, equal 1 for
/// a vanishing radius and `N` beyond the path's reach; stopping `Y` at the
/// exit from a ball that covers the support of `f` leaves `Y` unchanged.
pub fn localization(model: &ManifoldModel, paths: usize, dt: f64, seed: u64, ctl: &SeriesControl) -> Result<CriterionResult> {
    let (x, y) = default_endpoints(model);
    let spec = BridgeSpec::new(*model, x.clone(), y.clone(), 1.0)?;
    let grid = TimeGrid::with_step(1.0, dt)?;
    let fs = standard_suite(model, &x, &y);
    let radii = [1e-9, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2];
    let rows: Vec<(bool, f64)> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_bridge_sde(&spec, &grid, &mut seeded(seed, "localization", i))?;
            let n = grid.steps();
            let reach = path.points.iter().map(|p| model.distance(&x, p)).fold(0.0, f64::max);
            let mut rs = radii.to_vec();
            rs.retain(|r| *r < reach + 1.0);
            rs.push(reach + 1.0);
            let idx = exit_time_localization(&path, &rs)?;
            let ok = idx.windows(2).all(|w| w[0] <= w[1]) && idx[0] == 1 && *idx.last().unwrap() == n;
            let mut gap: f64 = 0.0;
            for f in &fs {
                if let TestFunction::Bump { center, radius, .. } = f {
                    let r = model.distance(&x, center) + radius;
                    let tau = exit_time_localization(&path, &[r])?[0];
                    gap = gap.max(localization_gap(&path, f, tau, ctl)?);
                }
            }
            Ok((ok, gap))
        })
        .collect::<Result<_>>()?;
    let monotone = rows.iter().all(|r| r.0);
    let gap = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(CriterionResult::new(
        10,
        "localization",
        model,
        monotone && gap <= LOCALIZATION_TOL,
        json!({ "paths": paths, "exit_indices_monotone": monotone, "max_stopping_gap": gap, "tol": LOCALIZATION_TOL }),
    ))
}

/// Octant loop on the unit sphere with `k` points per edge.
pub fn octant_loop(k: usize) -> Vec<Point> {
    let m = ManifoldModel::sphere2();
    let corners = [Point::new(&[0.0, 0.0, 1.0]), Point::new(&[1.0, 0.0, 0.0]), Point::new(&[0.0, 1.0, 0.0]), Point::new(&[0.0, 0.0, 1.0])];
    let mut out = vec![corners[0].clone()];
    for w in corners.windows(2) {
        let v = m.log_ambient(&w[0], &w[1]);
        for j in 1..=k {
            let s = j as f64 / k as f64;
            out.push(m.exp_ambient(&w[0], &v.iter().map(|c| s * c).collect::<Coords>()));
        }
    }
    let last = out.len() - 1;
    out[last] = corners[0].clone();
    out
}

/// Criterion 11: octant holonomy on the sphere, and lifts of guided bridge
/// paths on `model`: orthonormality before and after projection, exact base
/// points, and bit-identical repeated lifts.
pub fn frame_lift(model: &ManifoldModel, paths: usize, dt: f64, seed: u64) -> Result<CriterionResult> {
    let s2 = ManifoldModel::sphere2();
    let north = Point::new(&[0.0, 0.0, 1.0]);
    let h = holonomy(&s2, &octant_loop(64), &Frame::canonical(&s2, &north))?;
    let angle = rotation_angle(&h);
    let holonomy_ok = (angle - FRAC_PI_2).abs() <= HOLONOMY_TOL;
    let (x, y) = default_endpoints(model);
    let spec = BridgeSpec::new(*model, x, y, 1.0)?;
    let grid = TimeGrid::with_step(1.0, dt)?;
    let rows: Vec<(f64, f64, bool, bool)> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_bridge_sde(&spec, &grid, &mut seeded(seed, "lift", i))?;
            let u0 = Frame::canonical(model, &path.points[0]);
            let a = horizontal_lift(&path, &u0)?;
            let b = horizontal_lift(&path, &u0)?;
            let based = a.frames.iter().zip(&path.points).all(|(f, p)| f.base == *p);
            Ok((a.orthonormality_defect, a.final_defect, based, a == b))
        })
        .collect::<Result<_>>()?;
    let pre = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let post = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let based = rows.iter().all(|r| r.2);
    let deterministic = rows.iter().all(|r| r.3);
    Ok(CriterionResult::new(
        11,
        "frame-lift",
        model,
        holonomy_ok && pre <= LIFT_PRE_TOL && post <= LIFT_POST_TOL && based && deterministic,
        json!({
            "octant_angle": angle,
            "octant_target": FRAC_PI_2,
            "holonomy_tol": HOLONOMY_TOL,
            "paths": paths,
            "max_defect_before_projection": pre,
            "max_defect_after_projection": post,
            "base_points_exact": based,
            "deterministic": deterministic,
        }),
    ))
}

/// Which criteria apply to a model.
pub fn applicable(model: &ManifoldModel) -> Vec<u32> {
    let mut ids = vec![1, 2, 3];
    if model.is_compact() {
        ids.push(4);
    }
    if model.kind != ModelKind::CircleS1 {
        ids.push(5);
    }
    if matches!(model.kind, ModelKind::EuclideanR(_) | ModelKind::CircleS1) {
        ids.extend([6, 7, 8]);
    }
    ids.extend([9, 10, 11]);
    ids
}

/// Runs one criterion on one model.
pub fn run_criterion(id: u32, model: &ManifoldModel, sizes: &Sizes, seed: u64, ctl: &SeriesControl) -> Result<CriterionResult> {
    match id {
        1 => kernel_exactness(model, ctl),
        2 => gradient_correctness(model, sizes.gradient_samples, seed, ctl),
        3 => heat_kernel_certificates(model, sizes.certificate_n_t, sizes.certificate_n_xy, ctl),
        4 => arnaudon_thalmaier(model, sizes.certificate_n_t, sizes.certificate_n_xy, ctl),
        5 => volume_comparison(model, sizes.certificate_n_xy, ctl),
        6 if model.kind == ModelKind::CircleS1 => bridge_law_circle(sizes.law_paths, seed, ctl),
        6 => bridge_law_euclidean(model, sizes.law_paths, sizes.dt, seed),
        7 => time_reversal(model, sizes.law_paths, seed),
        8 => markov_property(model, sizes.markov_outer, sizes.markov_inner, seed),
        9 => semimartingale(model, sizes.semimart_paths, sizes.refine_paths, sizes.dt, seed),
        10 => localization(model, sizes.exit_paths, sizes.dt, seed, ctl),
        11 => frame_lift(model, sizes.lift_paths, sizes.dt, seed),
        _ => Err(crate::error::Error::Config(format!("no criterion {id}"))),
    }
}
