//! The process `Y = f(X) - f(X_0) - ∫ ((1/2)Δf + ⟨∇log p(T-r, ·, y), ∇f⟩)(X_r) dr`
//! along bridge paths, and Monte Carlo checks of its martingale property,
//! integrability and localization.

mod testfn;

pub use testfn::{standard_suite, Jet, TestFunction};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{sample_bridge_sde_coupled, sample_bridge_sde_with_drifts, BridgePath, BridgeSpec, ExactSampler, Functional, SdeOptions, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{Coords, ManifoldModel, ModelKind, Point};
use crate::heatkernel::{bridge_drift, log_gradient_ambient, SeriesControl};
use crate::rng::RngStream;
use crate::stats::Moments;

/// Statistical pass threshold in standard errors.
pub const SE_THRESHOLD: f64 = 4.0;

/// Paths per parallel chunk in the streaming drivers.
const CHUNK: usize = 512;

/// `⟨∇log p(T - t, z, y), ∇f(z)⟩`.
pub fn drift_integrand(
    model: &ManifoldModel,
    f: &TestFunction,
    t: f64,
    z: &Point,
    y: &Point,
    horizon: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    if !(t < horizon) {
        return Err(Error::Domain(format!("drift integrand needs t < T, got t={t}, T={horizon}")));
    }
    let df = f.gradient(model, z);
    if df.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let (g, _) = log_gradient_ambient(model, horizon - t, z, y, ctl)?;
    Ok(model.inner(&g, &df))
}

/// Per-path output of the quadrature: `Y` on the grid and the absolute
/// integral `∫ |∇log p| |∇f| dr`.
#[derive(Clone, Debug, PartialEq)]
pub struct YSeries {
    pub y: Vec<f64>,
    pub abs_integral: f64,
}

/// `Y` with drifts supplied by the caller (`drifts[j]` at `X_j`, `j < N`).
///
/// Trapezoid rule on every step except the last, which uses the left
/// endpoint since the drift is not defined at `r = T`.
pub fn compute_y_with_drifts(path: &BridgePath, f: &TestFunction, drifts: &[Coords]) -> Result<YSeries> {
    let m = &path.spec.model;
    let n = path.grid.steps();
    if drifts.len() < n || path.points.len() != n + 1 {
        return Err(Error::Precondition(format!("need {n} drifts and {} points", n + 1)));
    }
    let mut vals = Vec::with_capacity(n + 1);
    let mut h = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for (z, g) in path.points[..n].iter().zip(drifts) {
        let jet = f.jet(m, z);
        vals.push(jet.value);
        if jet.gradient_vanishes() {
            h.push(0.5 * jet.laplacian);
            a.push(0.0);
        } else {
            h.push(0.5 * jet.laplacian + m.inner(g, &jet.gradient));
            a.push(m.vec_norm(g) * m.vec_norm(&jet.gradient));
        }
    }
    vals.push(f.eval(m, &path.points[n]));
    let mut y = Vec::with_capacity(n + 1);
    y.push(0.0);
    let (mut integral, mut abs_integral) = (0.0, 0.0);
    for j in 1..=n {
        let dt = path.grid.delta(j);
        if j < n {
            integral += 0.5 * dt * (h[j - 1] + h[j]);
            abs_integral += 0.5 * dt * (a[j - 1] + a[j]);
        } else {
            integral += dt * h[j - 1];
            abs_integral += dt * a[j - 1];
        }
        y.push(vals[j] - vals[0] - integral);
    }
    Ok(YSeries { y, abs_integral })
}

/// Drifts `∇log p(T - t_j, X_j, y)` at `j < N`; zero vectors wherever every
/// function in `fs` has vanishing gradient (the kernel is then not needed).
pub fn path_drifts(path: &BridgePath, fs: &[TestFunction], ctl: &SeriesControl) -> Result<Vec<Coords>> {
    let m = &path.spec.model;
    let n = path.grid.steps();
    (0..n)
        .map(|j| {
            let z = &path.points[j];
            if fs.iter().all(|f| f.gradient(m, z).iter().all(|v| *v == 0.0)) {
                return Ok(Coords::from_elem(0.0, m.chart_len()));
            }
            Ok(bridge_drift(m, path.grid.remaining()[j], z, &path.spec.y, ctl)?.0)
        })
        .collect()
}

/// `Y` along a path, evaluating the drift from the heat kernel.
pub fn compute_y(path: &BridgePath, f: &TestFunction, ctl: &SeriesControl) -> Result<Vec<f64>> {
    let drifts = path_drifts(path, std::slice::from_ref(f), ctl)?;
    Ok(compute_y_with_drifts(path, f, &drifts)?.y)
}

/// One conditional check `E[(Y_s - Y_t) g(X_{·≤t})] = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCheck {
    pub s_index: usize,
    pub t_index: usize,
    pub g: Functional,
}

/// Grid indices at which `E[Y]` is checked, and the conditional checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub mean_indices: Vec<usize>,
    pub checks: Vec<ConditionalCheck>,
}

/// Conditioning library at time index `t`: the constant, and the cosine and
/// sine of the angular coordinate and the first chart coordinate at `⌊t/2⌋`.
pub fn conditioning_library(model: &ManifoldModel, t_index: usize) -> Vec<Functional> {
    let h = t_index / 2;
    let mut out = vec![Functional::One, Functional::Cos { index: h }, Functional::Sin { index: h }];
    if !matches!(model.kind, ModelKind::CircleS1) {
        out.push(Functional::Coordinate { index: h, coord: 0 });
    }
    out
}

impl Battery {
    /// Battery for the given `(s, t)` time pairs (`t ≤ s`), which must lie on
    /// the grid.
    pub fn from_times(model: &ManifoldModel, grid: &TimeGrid, pairs: &[(f64, f64)], mean_times: &[f64]) -> Result<Self> {
        let idx = |t: f64| grid.index_of(t).ok_or_else(|| Error::Grid(format!("time {t} is not on the grid")));
        let mean_indices = mean_times.iter().map(|&t| idx(t)).collect::<Result<_>>()?;
        let mut checks = Vec::new();
        for &(s, t) in pairs {
            let (si, ti) = (idx(s)?, idx(t)?);
            if ti > si {
                return Err(Error::Grid(format!("pair (s={s}, t={t}) needs t <= s")));
            }
            checks.extend(conditioning_library(model, ti).into_iter().map(|g| ConditionalCheck { s_index: si, t_index: ti, g }));
        }
        Ok(Self { mean_indices, checks })
    }

    /// Quarter-grid battery: `E[Y]` at `T/4, T/2, 3T/4, T` and the pairs
    /// `(T/2, 0)`, `(3T/4, T/4)`, `(T, T/2)`, `(T, 3T/4)`, `(T, 0)`.
    pub fn default_for(model: &ManifoldModel, grid: &TimeGrid) -> Result<Self> {
        let n = grid.steps();
        if n % 4 != 0 {
            return Err(Error::Grid(format!("the default battery needs N divisible by 4, got {n}")));
        }
        let q = |k: usize| k * n / 4;
        let mut checks = Vec::new();
        for (s, t) in [(q(2), 0), (q(3), q(1)), (q(4), q(2)), (q(4), q(3)), (q(4), 0)] {
            checks.extend(conditioning_library(model, t).into_iter().map(|g| ConditionalCheck { s_index: s, t_index: t, g }));
        }
        Ok(Self { mean_indices: vec![q(1), q(2), q(3), q(4)], checks })
    }

    fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let n = grid.steps();
        for c in &self.checks {
            if c.s_index > n || c.t_index > c.s_index || c.g.max_index() > c.t_index {
                return Err(Error::Grid(format!("check (s={}, t={}, g={}) is not adapted to the grid", c.s_index, c.t_index, c.g.id())));
            }
        }
        if self.mean_indices.iter().any(|&i| i > n) {
            return Err(Error::Grid("mean index beyond the grid".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMean {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDefect {
    pub s: f64,
    pub t: f64,
    pub g: String,
    pub defect: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub f_id: String,
    pub n_paths: u64,
    pub times: Vec<f64>,
    pub mean_y: Vec<TimeMean>,
    pub conditional_defects: Vec<ConditionalDefect>,
    pub integrability_estimate: f64,
    pub integrability_se: f64,
    pub threshold_se: f64,
    /// Number of statistical tests behind `pass`; the per-test false alarm
    /// rate at 4 SE is about 6e-5.
    pub tests: usize,
    pub pass: bool,
}

/// Streaming accumulator for one test function.
#[derive(Clone, Debug)]
pub struct MartingaleAccumulator {
    f_id: String,
    battery: Battery,
    means: Vec<Moments>,
    defects: Vec<Moments>,
    abs: Moments,
}

impl MartingaleAccumulator {
    pub fn new(f: &TestFunction, battery: Battery) -> Self {
        Self {
            f_id: f.id(),
            means: vec![Moments::default(); battery.mean_indices.len()],
            defects: vec![Moments::default(); battery.checks.len()],
            battery,
            abs: Moments::default(),
        }
    }

    pub fn push(&mut self, model: &ManifoldModel, points: &[Point], ys: &YSeries) {
        for (acc, &i) in self.means.iter_mut().zip(&self.battery.mean_indices) {
            acc.push(ys.y[i]);
        }
        for (acc, c) in self.defects.iter_mut().zip(&self.battery.checks) {
            let inc = ys.y[c.s_index] - ys.y[c.t_index];
            acc.push(if inc == 0.0 { 0.0 } else { inc * c.g.eval(model, points) });
        }
        self.abs.push(ys.abs_integral);
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.means.iter_mut().zip(&other.means) {
            a.merge(b);
        }
        for (a, b) in self.defects.iter_mut().zip(&other.defects) {
            a.merge(b);
        }
        self.abs.merge(&other.abs);
    }

    pub fn report(&self, grid: &TimeGrid) -> MartingaleReport {
        let ts = grid.times();
        let mean_y: Vec<TimeMean> = self
            .means
            .iter()
            .zip(&self.battery.mean_indices)
            .map(|(m, &i)| TimeMean { t: ts[i], mean: m.mean(), se: m.se() })
            .collect();
        let conditional_defects: Vec<ConditionalDefect> = self
            .defects
            .iter()
            .zip(&self.battery.checks)
            .map(|(m, c)| ConditionalDefect { s: ts[c.s_index], t: ts[c.t_index], g: c.g.id(), defect: m.mean(), se: m.se() })
            .collect();
        let ok = |mean: f64, se: f64| mean.abs() <= SE_THRESHOLD * se;
        let finite = self.abs.mean().is_finite() && self.abs.se().is_finite();
        let pass = finite && mean_y.iter().all(|m| ok(m.mean, m.se)) && conditional_defects.iter().all(|d| ok(d.defect, d.se));
        let mut times: Vec<f64> = self.battery.mean_indices.iter().map(|&i| ts[i]).collect();
        times.extend(self.battery.checks.iter().flat_map(|c| [ts[c.t_index], ts[c.s_index]]));
        times.sort_by(f64::total_cmp);
        times.dedup();
        MartingaleReport {
            f_id: self.f_id.clone(),
            n_paths: self.abs.n,
            times,
            tests: mean_y.len() + conditional_defects.len(),
            mean_y,
            conditional_defects,
            integrability_estimate: self.abs.mean(),
            integrability_se: self.abs.se(),
            threshold_se: SE_THRESHOLD,
            pass,
        }
    }
}

/// Martingale test over a given ensemble, one report per test function.
/// The drift is evaluated from the heat kernel along each path.
pub fn martingale_test(paths: &[BridgePath], fs: &[TestFunction], battery: &Battery, ctl: &SeriesControl) -> Result<Vec<MartingaleReport>> {
    let first = paths.first().ok_or_else(|| Error::Precondition("empty ensemble".into()))?;
    battery.validate(&first.grid)?;
    if paths.iter().any(|p| p.grid != first.grid) {
        return Err(Error::Grid("ensemble paths must share one grid".into()));
    }
    let model = first.spec.model;
    let per_path: Vec<Vec<YSeries>> = paths
        .par_iter()
        .map(|p| {
            let drifts = path_drifts(p, fs, ctl)?;
            fs.iter().map(|f| compute_y_with_drifts(p, f, &drifts)).collect()
        })
        .collect::<Result<_>>()?;
    let mut accs: Vec<MartingaleAccumulator> = fs.iter().map(|f| MartingaleAccumulator::new(f, battery.clone())).collect();
    for (p, ys) in paths.iter().zip(&per_path) {
        for (acc, y) in accs.iter_mut().zip(ys) {
            acc.push(&model, &p.points, y);
        }
    }
    Ok(accs.iter().map(|a| a.report(&first.grid)).collect())
}

/// Martingale test on `n_paths` guided-SDE paths generated and consumed in
/// chunks (paths are never all held in memory). Path `i` uses the stream
/// `(seed, "semimart", i)`.
pub fn martingale_test_sde(
    spec: &BridgeSpec,
    grid: &TimeGrid,
    fs: &[TestFunction],
    battery: &Battery,
    n_paths: u64,
    seed: u64,
    opts: &SdeOptions,
) -> Result<Vec<MartingaleReport>> {
    streamed(&spec.model, grid, fs, battery, n_paths, |i| {
        sample_bridge_sde_with_drifts(spec, grid, &mut RngStream::new(seed, "semimart", i), opts)
    })
}

/// [`martingale_test_sde`] on exact-marginal paths, whose law on the grid
/// carries no discretization error; only the quadrature of `Y` does.
pub fn martingale_test_exact(
    sampler: &ExactSampler,
    fs: &[TestFunction],
    battery: &Battery,
    n_paths: u64,
    seed: u64,
    ctl: &SeriesControl,
) -> Result<Vec<MartingaleReport>> {
    streamed(&sampler.spec().model, sampler.grid(), fs, battery, n_paths, |i| {
        let path = sampler.sample(&mut RngStream::new(seed, "semimart", i))?;
        let drifts = path_drifts(&path, fs, ctl)?;
        Ok((path, drifts))
    })
}

fn streamed<F>(model: &ManifoldModel, grid: &TimeGrid, fs: &[TestFunction], battery: &Battery, n_paths: u64, sample: F) -> Result<Vec<MartingaleReport>>
where
    F: Fn(u64) -> Result<(BridgePath, Vec<Coords>)> + Sync,
{
    battery.validate(grid)?;
    for f in fs {
        f.validate(model)?;
    }
    let mut accs: Vec<MartingaleAccumulator> = fs.iter().map(|f| MartingaleAccumulator::new(f, battery.clone())).collect();
    let mut start = 0u64;
    while start < n_paths {
        let end = (start + CHUNK as u64).min(n_paths);
        let chunk: Vec<(BridgePath, Vec<YSeries>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let (path, drifts) = sample(i)?;
                let ys = fs.iter().map(|f| compute_y_with_drifts(&path, f, &drifts)).collect::<Result<_>>()?;
                Ok((path, ys))
            })
            .collect::<Result<_>>()?;
        for (path, ys) in &chunk {
            for (acc, y) in accs.iter_mut().zip(ys) {
                acc.push(model, &path.points, y);
            }
        }
        start = end;
    }
    Ok(accs.iter().map(|a| a.report(grid)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub dt: f64,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub f_id: String,
    pub n_paths: u64,
    /// Estimate at the finest step.
    pub estimate: f64,
    pub se: f64,
    /// Coarse to fine.
    pub levels: Vec<RefinementLevel>,
    /// `|E[I_{dt/2^(k+1)} - I_{dt/2^k}]|` from paths sharing their noise.
    pub increments: Vec<f64>,
    pub increment_se: Vec<f64>,
    /// Ratios of successive increments.
    pub ratios: Vec<f64>,
    pub finite: bool,
    /// Every increment ratio is below 0.9.
    pub stabilizes: bool,
}

/// `E[∫_0^T |∇log p(T-r, X_r, y)| |∇f(X_r)| dr]` over `n_paths` guided-SDE
/// paths on `steps`, `2·steps`, ... (`levels` grids) sharing their
/// Brownian increments.
pub fn integrability_estimate(
    spec: &BridgeSpec,
    steps: usize,
    levels: usize,
    fs: &[TestFunction],
    n_paths: u64,
    seed: u64,
    opts: &SdeOptions,
) -> Result<Vec<IntegrabilityReport>> {
    if levels < 2 {
        return Err(Error::Config("refinement needs at least two levels".into()));
    }
    let fine = steps << (levels - 1);
    // per function: per-level moments and per-increment moments
    let mut lv = vec![vec![Moments::default(); levels]; fs.len()];
    let mut inc = vec![vec![Moments::default(); levels - 1]; fs.len()];
    let mut start = 0u64;
    while start < n_paths {
        let end = (start + CHUNK as u64).min(n_paths);
        let chunk: Vec<Vec<Vec<f64>>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut stream = RngStream::new(seed, "integrability", i);
                // finest first; reorder to coarse-to-fine
                let mut paths = sample_bridge_sde_coupled(spec, fine, levels, &mut stream, opts)?;
                paths.reverse();
                fs.iter()
                    .map(|f| paths.iter().map(|(p, d)| Ok(compute_y_with_drifts(p, f, d)?.abs_integral)).collect::<Result<Vec<f64>>>())
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        for per_f in &chunk {
            for (k, vals) in per_f.iter().enumerate() {
                for (l, v) in vals.iter().enumerate() {
                    lv[k][l].push(*v);
                }
                for l in 0..levels - 1 {
                    inc[k][l].push(vals[l + 1] - vals[l]);
                }
            }
        }
        start = end;
    }
    Ok(fs
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let level_reports: Vec<RefinementLevel> = lv[k]
                .iter()
                .enumerate()
                .map(|(l, m)| RefinementLevel { dt: spec.horizon / (steps << l) as f64, estimate: m.mean(), se: m.se() })
                .collect();
            let increments: Vec<f64> = inc[k].iter().map(|m| m.mean().abs()).collect();
            let ratios: Vec<f64> = increments
                .windows(2)
                .map(|w| match (w[0], w[1]) {
                    (a, b) if a == 0.0 && b == 0.0 => 0.0,
                    (a, b) => b / a,
                })
                .collect();
            let last = *level_reports.last().unwrap();
            let finite = level_reports.iter().all(|l| l.estimate.is_finite() && l.se.is_finite());
            IntegrabilityReport {
                f_id: f.id(),
                n_paths,
                estimate: last.estimate,
                se: last.se,
                increment_se: inc[k].iter().map(|m| m.se()).collect(),
                stabilizes: ratios.iter().all(|r| *r < 0.9),
                levels: level_reports,
                increments,
                ratios,
                finite,
            }
        })
        .collect())
}

/// First grid index at which the path leaves `B(x, r_n)`, for each radius,
/// or `N` if it never does.
pub fn exit_time_localization(path: &BridgePath, radii: &[f64]) -> Result<Vec<usize>> {
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("radii must be positive and strictly increasing".into()));
    }
    let m = &path.spec.model;
    let x = &path.points[0];
    let n = path.points.len() - 1;
    let dist: Vec<f64> = path.points.iter().map(|p| m.distance(x, p)).collect();
    Ok(radii.iter().map(|&r| (1..=n).find(|&j| dist[j] >= r).unwrap_or(n)).collect())
}

/// The path frozen at its value at grid index `k`.
pub fn stop_path(path: &BridgePath, k: usize) -> BridgePath {
    let mut out = path.clone();
    let k = k.min(path.points.len() - 1);
    let frozen = path.points[k].clone();
    for p in out.points.iter_mut().skip(k + 1) {
        *p = frozen.clone();
    }
    out.terminal_snap = path.terminal_snap && k + 1 >= path.points.len();
    out
}

/// `max_j |Y_{j ∧ τ} - Ỹ_j|`, where `Ỹ` is computed on the path stopped at
/// `τ`. Zero up to rounding whenever `X_τ` lies outside the support of `f`.
pub fn localization_gap(path: &BridgePath, f: &TestFunction, tau: usize, ctl: &SeriesControl) -> Result<f64> {
    let y = compute_y(path, f, ctl)?;
    let stopped = compute_y(&stop_path(path, tau), f, ctl)?;
    Ok((0..y.len()).map(|j| (y[j.min(tau)] - stopped[j]).abs()).fold(0.0, f64::max))
}
