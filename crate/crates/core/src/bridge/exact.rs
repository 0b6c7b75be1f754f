//! Sequential sampling of the bridge's finite-dimensional laws.
//!
//! Given `x_{j-1}`, the next point has density proportional to
//! `p(δ_j, x_{j-1}, ·) p(T - t_j, ·, y)`:
//! - Euclidean: that product is Gaussian and is sampled in closed form;
//! - circle: the kernel is a wrapped Gaussian, so the step is a Euclidean
//!   bridge step towards an image `y + 2πn` drawn with weight
//!   `∝ exp(-(y + 2πn - x)²/(2(δ + τ)))`;
//! - sphere and H3: rejection from one heat kernel factor. Its radial law is
//!   split into shells; both kernels decrease with distance, so the other
//!   factor is bounded on each shell by its value at the shell's nearest
//!   possible distance, and shells are drawn in proportion to mass times bound.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};

use smallvec::smallvec;

use super::{check_grid_matches, BridgePath, BridgeSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{Coords, ManifoldModel, ModelKind, Point};
use crate::heatkernel::{radial_log_kernel, tabulated_log_kernel, SeriesControl};
use crate::rng::RngStream;

/// Attempts after which a rejection step without any acceptance is an
/// efficiency error (acceptance rate below 1e-4).
const MAX_ATTEMPTS: u64 = 10_000;

/// Radial shells in the rejection envelope.
const SHELLS: usize = 16;

/// Log of an upper bound on the proposal mass beyond a truncated radial
/// table (the cut sits at about twelve standard deviations).
const LOG_TAIL: f64 = -60.0;

/// Largest admissible share of the step's target mass lost to truncation.
const LOG_LOST: f64 = -27.6;

/// Inverse CDF of a piecewise-linear density on a uniform mesh.
#[derive(Debug)]
struct LinearCdf {
    start: f64,
    h: f64,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LinearCdf {
    fn new(start: f64, h: f64, density: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(density.len());
        cumulative.push(0.0);
        for w in density.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + 0.5 * h * (w[0] + w[1]));
        }
        Self { start, h, density, cumulative }
    }

    fn end(&self) -> f64 {
        self.start + (self.density.len() - 1) as f64 * self.h
    }

    /// Fraction of the mass below `x`.
    fn cdf(&self, x: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let pos = ((x - self.start) / self.h).clamp(0.0, (self.density.len() - 1) as f64);
        let k = (pos.floor() as usize).min(self.density.len() - 2);
        let r = (pos - k as f64) * self.h;
        let (q0, q1) = (self.density[k], self.density[k + 1]);
        ((self.cumulative[k] + q0 * r + (q1 - q0) * r * r / (2.0 * self.h)) / total).min(1.0)
    }

    fn sample(&self, u: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let r = u * total;
        // last cell with cumulative <= r
        let k = self.cumulative.partition_point(|&c| c <= r).saturating_sub(1).min(self.density.len() - 2);
        let rem = r - self.cumulative[k];
        let (q0, q1) = (self.density[k], self.density[k + 1]);
        // solve q0 x + (q1 - q0) x² / (2h) = rem
        let disc = (q0 * q0 + 2.0 * (q1 - q0) * rem / self.h).max(0.0);
        let denom = q0 + disc.sqrt();
        let x = if rem <= 0.0 {
            0.0
        } else if denom > 0.0 {
            2.0 * rem / denom
        } else {
            0.5 * self.h
        };
        self.start + k as f64 * self.h + x.clamp(0.0, self.h)
    }
}

/// Inverse CDF of the geodesic distance under `p(s, c, ·) dμ`.
fn radial_table(model: &ManifoldModel, s: f64, ctl: &SeriesControl) -> Result<LinearCdf> {
    let rho_max = match model.kind {
        ModelKind::SphereS2 => (12.0 * s.sqrt()).min(PI),
        _ => s + (s * s + 144.0 * s).sqrt(),
    };
    let n = 4096;
    let h = rho_max / n as f64;
    let mut logq = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let rho = i as f64 * h;
        let area = model.sphere_area_at(rho);
        let lp = radial_log_kernel(model, s, rho, ctl)?.0;
        logq.push(if area > 0.0 { lp + area.ln() } else { f64::NEG_INFINITY });
    }
    let mx = logq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LinearCdf::new(0.0, h, logq.into_iter().map(|l| (l - mx).exp()).collect()))
}

/// Exact-marginal bridge sampler for one `(spec, grid)`. Caches the radial
/// proposal tables on the sphere and H3.
pub struct ExactSampler {
    spec: BridgeSpec,
    grid: TimeGrid,
    ctl: SeriesControl,
    tables: Mutex<HashMap<u64, Arc<LinearCdf>>>,
}

impl ExactSampler {
    pub fn new(spec: BridgeSpec, grid: TimeGrid) -> Result<Self> {
        Self::with_control(spec, grid, SeriesControl::default())
    }

    pub fn with_control(spec: BridgeSpec, grid: TimeGrid, ctl: SeriesControl) -> Result<Self> {
        check_grid_matches(&spec, &grid)?;
        ctl.validate()?;
        Ok(Self { spec, grid, ctl, tables: Mutex::new(HashMap::new()) })
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, stream: &mut RngStream) -> Result<BridgePath> {
        let n = self.grid.steps();
        let mut points = Vec::with_capacity(n + 1);
        points.push(self.spec.x.clone());
        for j in 1..n {
            let next = self.step(j, &points[j - 1], stream)?;
            points.push(next);
        }
        points.push(self.spec.y.clone());
        Ok(BridgePath {
            spec: self.spec.clone(),
            grid: self.grid.clone(),
            points,
            stream_id: stream.id(),
            terminal_snap: true,
            capped_steps: 0,
            stability_warning: false,
        })
    }

    fn table(&self, s: f64) -> Result<Arc<LinearCdf>> {
        let key = s.to_bits();
        if let Some(t) = self.tables.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(radial_table(&self.spec.model, s, &self.ctl)?);
        let mut map = self.tables.lock().unwrap();
        if map.len() > 256 {
            map.clear();
        }
        map.insert(key, t.clone());
        Ok(t)
    }

    fn step(&self, j: usize, a: &Point, stream: &mut RngStream) -> Result<Point> {
        let m = &self.spec.model;
        let y = &self.spec.y;
        let delta = self.grid.delta(j);
        let tau = self.grid.remaining()[j];
        match m.kind {
            ModelKind::EuclideanR(_) => {
                let r = self.grid.remaining()[j - 1];
                let w = delta / r;
                let sd = (delta * tau / r).sqrt();
                Ok(Point { coords: a.coords.iter().zip(y.coords.iter()).map(|(ai, yi)| ai + w * (yi - ai) + sd * stream.normal()).collect() })
            }
            ModelKind::CircleS1 => {
                let r = self.grid.remaining()[j - 1];
                let (a, y) = (a.coords[0], y.coords[0]);
                let n0 = ((a - y) / TAU).round() as i64;
                let reach = (6.0 * r.sqrt() / PI).ceil() as i64 + 1;
                let images: Vec<f64> = (n0 - reach..=n0 + reach).map(|n| y + TAU * n as f64).collect();
                let logw: Vec<f64> = images.iter().map(|yn| -(yn - a).powi(2) / (2.0 * r)).collect();
                let target = images[pick(&logw, stream.uniform())];
                let z = a + delta / r * (target - a) + (delta * tau / r).sqrt() * stream.normal();
                Ok(m.exp_ambient(&Point::new(&[0.0]), &[z]))
            }
            ModelKind::SphereS2 | ModelKind::HyperbolicH3 => {
                // propose from the factor with the shorter time, accept with the other
                let (s_prop, center, s_acc, target) = if delta <= tau { (delta, a, tau, y) } else { (tau, y, delta, a) };
                let table = self.table(s_prop)?;
                let d = m.distance(center, target);
                let reach = table.end();
                if m.kind == ModelKind::HyperbolicH3 || reach < PI {
                    // the target may not sit outside the proposal's support
                    let lost = LOG_TAIL + tabulated_log_kernel(m, s_acc, (reach - d).max(0.0), &self.ctl)?;
                    if lost - tabulated_log_kernel(m, delta + tau, d, &self.ctl)? > LOG_LOST {
                        return Err(Error::Efficiency { rate: 0.0 });
                    }
                }
                let width = reach / SHELLS as f64;
                let edges: Vec<f64> = (0..=SHELLS).map(|i| table.cdf(i as f64 * width)).collect();
                let bounds: Vec<f64> = (1..=SHELLS).map(|i| tabulated_log_kernel(m, s_acc, (d - i as f64 * width).max(0.0), &self.ctl)).collect::<Result<_>>()?;
                let logw: Vec<f64> = bounds.iter().zip(edges.windows(2)).map(|(b, e)| if e[1] > e[0] { b + (e[1] - e[0]).ln() } else { f64::NEG_INFINITY }).collect();
                let frame = m.frame(center);
                for _ in 0..MAX_ATTEMPTS {
                    let i = pick(&logw, stream.uniform());
                    let rho = table.sample(edges[i] + stream.uniform() * (edges[i + 1] - edges[i]));
                    let mut v: Coords = smallvec![0.0; m.chart_len()];
                    let dir: Vec<f64> = (0..m.dim).map(|_| stream.normal()).collect();
                    let dn = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                    for (e, d) in frame.iter().zip(&dir) {
                        for (vi, ei) in v.iter_mut().zip(e.iter()) {
                            *vi += rho * d / dn * ei;
                        }
                    }
                    let z = m.exp_ambient(center, &v);
                    let la = tabulated_log_kernel(m, s_acc, m.distance(&z, target), &self.ctl)?;
                    if stream.uniform() < (la - bounds[i]).exp() {
                        return Ok(z);
                    }
                }
                Err(Error::Efficiency { rate: 1.0 / MAX_ATTEMPTS as f64 })
            }
        }
    }
}

/// Index drawn with probability proportional to `exp(logw)`.
fn pick(logw: &[f64], u: f64) -> usize {
    let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let mut r = u * w.iter().sum::<f64>();
    for (i, wi) in w.iter().enumerate() {
        if r < *wi {
            return i;
        }
        r -= wi;
    }
    w.iter().rposition(|wi| *wi > 0.0).unwrap_or(0)
}

/// One path from the exact-marginal sampler.
pub fn sample_bridge_exact(spec: &BridgeSpec, grid: &TimeGrid, stream: &mut RngStream) -> Result<BridgePath> {
    ExactSampler::new(spec.clone(), grid.clone())?.sample(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::fdd_log_density;
    use crate::heatkernel::log_kernel_value;
    use crate::stats::{chi_square, Moments};

    #[test]
    fn linear_cdf_inverts_a_ramp() {
        // density 1 + x on [0, 1]: CDF (x + x²/2) / 1.5
        let cdf = LinearCdf::new(0.0, 1.0, vec![1.0, 2.0]);
        for u in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let x: f64 = cdf.sample(u);
            assert!(((x + x * x / 2.0) / 1.5 - u).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_cdf_is_the_inverse_of_sample() {
        let cdf = LinearCdf::new(0.5, 0.25, vec![0.0, 1.0, 3.0, 0.5, 2.0]);
        assert_eq!(cdf.end(), 1.5);
        for u in [0.0, 0.05, 0.3, 0.77, 1.0] {
            assert!((cdf.cdf(cdf.sample(u)) - u).abs() < 1e-13);
        }
    }

    #[test]
    fn pick_follows_weights() {
        let logw = [0.0, f64::NEG_INFINITY, 2f64.ln()];
        assert_eq!(pick(&logw, 0.0), 0);
        assert_eq!(pick(&logw, 0.3), 0);
        assert_eq!(pick(&logw, 0.34), 2);
        assert_eq!(pick(&logw, 1.0), 2);
    }

    #[test]
    fn pinned_endpoints() {
        for m in [ManifoldModel::euclidean(2).unwrap(), ManifoldModel::circle(), ManifoldModel::sphere2(), ManifoldModel::hyperbolic3()] {
            let y = m.exp_ambient(&m.origin(), &m.to_ambient(&m.origin(), &vec![0.7; m.dim]));
            let spec = BridgeSpec::new(m, m.origin(), y.clone(), 1.0).unwrap();
            let grid = TimeGrid::uniform(1.0, 5).unwrap();
            let p = sample_bridge_exact(&spec, &grid, &mut RngStream::new(3, "exact", 0)).unwrap();
            assert_eq!(p.points[0], spec.x);
            assert_eq!(p.points[5], y);
            assert!(p.terminal_snap);
            for q in &p.points {
                m.validate(q).unwrap();
            }
        }
    }

    #[test]
    fn euclidean_midpoint_variance() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), m.origin(), 1.0).unwrap();
        let sampler = ExactSampler::new(spec, TimeGrid::uniform(1.0, 2).unwrap()).unwrap();
        let mut mom = Moments::default();
        for i in 0..20_000 {
            let p = sampler.sample(&mut RngStream::new(5, "var", i)).unwrap();
            mom.push(p.points[1].coords[0].powi(2));
        }
        assert!((mom.mean() - 0.25).abs() < 4.0 * mom.se());
    }

    #[test]
    fn circle_midpoint_histogram_matches_density() {
        let m = ManifoldModel::circle();
        let spec = BridgeSpec::new(m, Point::new(&[0.5]), Point::new(&[3.5]), 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let sampler = ExactSampler::new(spec.clone(), grid.clone()).unwrap();
        let bins = 30;
        let mut counts = vec![0u64; bins];
        let n = 30_000;
        for i in 0..n {
            let p = sampler.sample(&mut RngStream::new(9, "hist", i)).unwrap();
            let k = ((p.points[1].coords[0] / TAU) * bins as f64) as usize;
            counts[k.min(bins - 1)] += 1;
        }
        let ctl = SeriesControl::default();
        let g = crate::quadrature::GaussLegendre::g20();
        let expected: Vec<f64> = (0..bins)
            .map(|k| {
                let (a, b) = (k as f64 * TAU / bins as f64, (k + 1) as f64 * TAU / bins as f64);
                n as f64 * g.integrate(a, b, |z| fdd_log_density(&spec, &grid, &[Point::new(&[z])], &ctl).unwrap().exp())
            })
            .collect();
        let r = chi_square(&counts, &expected);
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn sphere_and_h3_rejection_match_density() {
        // one-point marginal: compare E[cos d(X, x)] with quadrature of the density
        for m in [ManifoldModel::sphere2(), ManifoldModel::hyperbolic3()] {
            let y = m.exp_ambient(&m.origin(), &m.to_ambient(&m.origin(), &vec![0.6; m.dim]));
            let spec = BridgeSpec::new(m, m.origin(), y, 0.6).unwrap();
            let grid = TimeGrid::from_times(vec![0.0, 0.2, 0.6]).unwrap();
            let sampler = ExactSampler::new(spec.clone(), grid.clone()).unwrap();
            let f = |z: &Point| (-m.distance(z, &spec.x)).exp();
            let mut mom = Moments::default();
            for i in 0..20_000 {
                let p = sampler.sample(&mut RngStream::new(4, "rej", i)).unwrap();
                mom.push(f(&p.points[1]));
            }
            let ctl = SeriesControl::default();
            let q = crate::heatkernel::semigroup_apply(
                &m,
                0.2,
                |z| {
                    let lp = log_kernel_value(&m, 0.4, z, &spec.y, &ctl).unwrap() - log_kernel_value(&m, 0.6, &spec.x, &spec.y, &ctl).unwrap();
                    f(z) * lp.exp()
                },
                &spec.x,
                &crate::heatkernel::QuadratureSpec::default(),
            )
            .unwrap();
            assert!((mom.mean() - q.value).abs() < 4.0 * mom.se(), "{m}: {} vs {}", mom.mean(), q.value);
        }
    }

    #[test]
    fn short_step_far_from_the_target_matches_density() {
        // δ ≪ τ and d(x, y) ≫ √τ: the accept factor is steep across the proposal
        for m in [ManifoldModel::sphere2(), ManifoldModel::hyperbolic3()] {
            let y = m.exp_ambient(&m.origin(), &m.to_ambient(&m.origin(), &vec![0.9; m.dim]));
            let spec = BridgeSpec::new(m, m.origin(), y, 0.08).unwrap();
            let grid = TimeGrid::from_times(vec![0.0, 0.02, 0.08]).unwrap();
            let sampler = ExactSampler::new(spec.clone(), grid.clone()).unwrap();
            let mut mom = Moments::default();
            for i in 0..20_000 {
                let p = sampler.sample(&mut RngStream::new(6, "far", i)).unwrap();
                mom.push(m.distance(&p.points[1], &spec.y));
            }
            let d = m.distance(&spec.x, &spec.y);
            let ctl = SeriesControl::default();
            let q = crate::heatkernel::semigroup_apply(
                &m,
                0.02,
                |z| {
                    let lp = log_kernel_value(&m, 0.06, z, &spec.y, &ctl).unwrap() - log_kernel_value(&m, 0.08, &spec.x, &spec.y, &ctl).unwrap();
                    m.distance(z, &spec.y) * lp.exp()
                },
                &spec.x,
                &crate::heatkernel::QuadratureSpec { panels: 64, ..Default::default() },
            )
            .unwrap();
            assert!(mom.mean() < d, "{m}");
            assert!((mom.mean() - q.value).abs() < 4.0 * mom.se() + 1e-6, "{m}: {} vs {}", mom.mean(), q.value);
        }
    }

    #[test]
    fn hopeless_rejection_reports_efficiency() {
        let m = ManifoldModel::hyperbolic3();
        let y = m.point_from_input(&[30.0, 0.0, 0.0]).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), y, 0.2).unwrap();
        let grid = TimeGrid::uniform(0.2, 2).unwrap();
        assert!(matches!(sample_bridge_exact(&spec, &grid, &mut RngStream::new(1, "x", 0)), Err(Error::Efficiency { .. })));
    }
}
