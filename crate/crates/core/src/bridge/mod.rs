//! Brownian bridges: endpoints and horizon, time grids, sampled paths, the
//! finite-dimensional bridge density, and path reversal.

mod exact;
mod markov;
mod sde;

pub use exact::{sample_bridge_exact, ExactSampler};
pub use markov::{markov_defect, MarkovReport};
pub use sde::{sample_bridge_sde, sample_bridge_sde_coupled, sample_bridge_sde_with_drifts, SdeOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, ModelKind, Point};
use crate::heatkernel::{log_kernel_value, SeriesControl};

/// Bridge from `x` to `y` with terminal time `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub model: ManifoldModel,
    pub x: Point,
    pub y: Point,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl BridgeSpec {
    pub fn new(model: ManifoldModel, x: Point, y: Point, horizon: f64) -> Result<Self> {
        model.validate(&x)?;
        model.validate(&y)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("terminal time must be positive, got {horizon}")));
        }
        Ok(Self { model, x, y, horizon })
    }
}

/// `0 = t_0 < ... < t_N = T`. The remaining times `T - t_j` are stored
/// alongside so that reversal swaps the two arrays exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    remaining: Vec<f64>,
    uniform_dt: Option<f64>,
}

impl TimeGrid {
    /// `N` equal steps on `[0, T]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!("need T > 0 and N >= 1, got T={horizon}, N={steps}")));
        }
        let n = steps as f64;
        let times = (0..=steps).map(|j| horizon * j as f64 / n).collect();
        let remaining = (0..=steps).map(|j| horizon * (steps - j) as f64 / n).collect();
        Ok(Self { times, remaining, uniform_dt: Some(horizon / n) })
    }

    /// Uniform grid with step closest to `dt`.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("time step must be positive, got {dt}")));
        }
        let n = (horizon / dt).round().max(1.0);
        if n > 1e9 {
            return Err(Error::Grid(format!("{n} steps is too many")));
        }
        Self::uniform(horizon, n as usize)
    }

    /// Arbitrary grid; must start at 0 and increase strictly.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Grid("grid needs at least two times starting at 0".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("grid times must increase strictly".into()));
        }
        let horizon = *times.last().unwrap();
        let n = times.len();
        let remaining: Vec<f64> = times.iter().enumerate().map(|(j, &t)| if j + 1 == n { 0.0 } else { horizon - t }).collect();
        if remaining.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Grid("grid times too close to resolve T - t".into()));
        }
        Ok(Self { times, remaining, uniform_dt: None })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `T - t_j`.
    pub fn remaining(&self) -> &[f64] {
        &self.remaining
    }

    pub fn uniform_dt(&self) -> Option<f64> {
        self.uniform_dt
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.steps()]
    }

    /// `t_j - t_{j-1}` for `j >= 1`.
    pub fn delta(&self, j: usize) -> f64 {
        self.times[j] - self.times[j - 1]
    }

    /// Grid mapped by `t ↦ T - t`.
    pub fn reversed(&self) -> Self {
        let mut times = self.remaining.clone();
        times.reverse();
        let mut remaining = self.times.clone();
        remaining.reverse();
        Self { times, remaining, uniform_dt: self.uniform_dt }
    }

    /// Index of the grid time equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let scale = self.horizon().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * scale)
    }

    /// Sub-grid from index `k` to the end, shifted to start at 0.
    pub fn tail_from(&self, k: usize) -> Result<Self> {
        if k >= self.steps() {
            return Err(Error::Grid(format!("index {k} leaves no steps")));
        }
        let times: Vec<f64> = self.remaining[k..].iter().map(|r| self.remaining[k] - r).collect();
        let remaining = self.remaining[k..].to_vec();
        Ok(Self { times, remaining, uniform_dt: self.uniform_dt })
    }
}

/// A sampled bridge path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgePath {
    pub spec: BridgeSpec,
    pub grid: TimeGrid,
    pub points: Vec<Point>,
    pub stream_id: u64,
    /// Whether the last point was set to `y` by construction.
    pub terminal_snap: bool,
    /// Steps whose drift displacement was capped (SDE sampler only).
    pub capped_steps: usize,
    /// More than 5% of the steps were capped.
    pub stability_warning: bool,
}

impl BridgePath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Path with the grid mapped by `t ↦ T - t`, the points reversed, and the
/// endpoints swapped.
pub fn reverse_path(path: &BridgePath) -> BridgePath {
    let mut points = path.points.clone();
    points.reverse();
    BridgePath {
        spec: BridgeSpec { model: path.spec.model, x: path.spec.y.clone(), y: path.spec.x.clone(), horizon: path.spec.horizon },
        grid: path.grid.reversed(),
        points,
        stream_id: path.stream_id,
        terminal_snap: path.terminal_snap,
        capped_steps: path.capped_steps,
        stability_warning: path.stability_warning,
    }
}

fn check_grid_matches(spec: &BridgeSpec, grid: &TimeGrid) -> Result<()> {
    let h = grid.horizon();
    if (h - spec.horizon).abs() > 1e-12 * spec.horizon.max(1.0) {
        return Err(Error::Grid(format!("grid ends at {h}, bridge at {}", spec.horizon)));
    }
    Ok(())
}

/// Log-density of the bridge at the interior points `x_1..x_{N-1}` with
/// respect to the product of Riemannian volumes:
/// `Σ_j log p(δ_j, x_{j-1}, x_j) + log p(δ_N, x_{N-1}, y) - log p(T, x, y)`.
pub fn fdd_log_density(spec: &BridgeSpec, grid: &TimeGrid, interior: &[Point], ctl: &SeriesControl) -> Result<f64> {
    check_grid_matches(spec, grid)?;
    let n = grid.steps();
    if interior.len() + 1 != n {
        return Err(Error::Grid(format!("{} interior points for a grid with {n} steps", interior.len())));
    }
    for j in 1..=n {
        if !(grid.delta(j) > 0.0) {
            return Err(Error::Grid("nonpositive time spacing".into()));
        }
    }
    let m = &spec.model;
    let mut prev = &spec.x;
    let mut total = 0.0;
    for (j, z) in interior.iter().enumerate() {
        m.validate(z)?;
        total += log_kernel_value(m, grid.delta(j + 1), prev, z, ctl)?;
        prev = z;
    }
    total += log_kernel_value(m, grid.delta(n), prev, &spec.y, ctl)?;
    Ok(total - log_kernel_value(m, spec.horizon, &spec.x, &spec.y, ctl)?)
}

/// Bounded test functionals of a path, evaluated at grid indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    One,
    /// Chart coordinate `coord` at grid index `index`.
    Coordinate { index: usize, coord: usize },
    /// Cosine of the angular coordinate at grid index `index`.
    Cos { index: usize },
    /// Sine of the angular coordinate at grid index `index`.
    Sin { index: usize },
}

/// The angle used by [`Functional::Cos`] and [`Functional::Sin`]: the
/// circle angle, the sphere's colatitude, and the first spatial coordinate
/// on Euclidean space and the hyperboloid.
pub fn angular_coordinate(model: &ManifoldModel, p: &Point) -> f64 {
    match model.kind {
        ModelKind::CircleS1 | ModelKind::EuclideanR(_) => p.coords[0],
        ModelKind::SphereS2 => p.coords[2].clamp(-1.0, 1.0).acos(),
        ModelKind::HyperbolicH3 => p.coords[1],
    }
}

impl Functional {
    pub fn eval(&self, model: &ManifoldModel, points: &[Point]) -> f64 {
        match *self {
            Functional::One => 1.0,
            Functional::Coordinate { index, coord } => points[index].coords[coord],
            Functional::Cos { index } => angular_coordinate(model, &points[index]).cos(),
            Functional::Sin { index } => angular_coordinate(model, &points[index]).sin(),
        }
    }

    /// Largest grid index read.
    pub fn max_index(&self) -> usize {
        match *self {
            Functional::One => 0,
            Functional::Coordinate { index, .. } | Functional::Cos { index } | Functional::Sin { index } => index,
        }
    }

    /// The same functional with indices shifted down by `k`.
    pub fn shifted(&self, k: usize) -> Result<Self> {
        let sh = |i: usize| i.checked_sub(k).ok_or_else(|| Error::Grid(format!("index {i} precedes {k}")));
        Ok(match *self {
            Functional::One => Functional::One,
            Functional::Coordinate { index, coord } => Functional::Coordinate { index: sh(index)?, coord },
            Functional::Cos { index } => Functional::Cos { index: sh(index)? },
            Functional::Sin { index } => Functional::Sin { index: sh(index)? },
        })
    }

    pub fn id(&self) -> String {
        match *self {
            Functional::One => "one".into(),
            Functional::Coordinate { index, coord } => format!("coord{coord}@{index}"),
            Functional::Cos { index } => format!("cos@{index}"),
            Functional::Sin { index } => format!("sin@{index}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatkernel::QuadratureSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn uniform_grid_endpoints_and_reversal() {
        let g = TimeGrid::uniform(0.7, 9).unwrap();
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.horizon(), 0.7);
        assert_eq!(g.reversed(), g);
        assert_eq!(g.reversed().reversed(), g);
        let g = TimeGrid::from_times(vec![0.0, 0.1, 0.35, 0.9, 1.3]).unwrap();
        assert_eq!(g.reversed().reversed(), g);
        assert_eq!(g.reversed().times()[0], 0.0);
        assert_eq!(g.reversed().horizon(), 1.3);
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::with_step(1.0, 0.0).is_err());
    }

    #[test]
    fn tail_grid_shifts_to_zero() {
        let g = TimeGrid::from_times(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let t = g.tail_from(2).unwrap();
        assert_eq!(t.times(), &[0.0, 0.25, 0.5]);
        assert_eq!(t.remaining(), &[0.5, 0.25, 0.0]);
    }

    #[test]
    fn fdd_without_interior_points_is_zero() {
        let m = ManifoldModel::sphere2();
        let spec = BridgeSpec::new(m, m.origin(), m.point_from_input(&[1.0, 0.3]).unwrap(), 0.8).unwrap();
        let grid = TimeGrid::uniform(0.8, 1).unwrap();
        let v = fdd_log_density(&spec, &grid, &[], &SeriesControl::default()).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn euclidean_midpoint_density() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), m.origin(), 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let v = fdd_log_density(&spec, &grid, &[Point::new(&[0.0])], &SeriesControl::default()).unwrap();
        assert_relative_eq!(v, (2.0 / PI).sqrt().ln(), max_relative = 1e-14);
        // matches the Gaussian with variance t(T-t)/T away from zero too
        let z = 0.37;
        let v = fdd_log_density(&spec, &grid, &[Point::new(&[z])], &SeriesControl::default()).unwrap();
        let var = 0.25;
        assert_relative_eq!(v, -0.5 * (TAU * var).ln() - z * z / (2.0 * var), max_relative = 1e-13);
    }

    #[test]
    fn circle_one_point_density_normalizes() {
        let m = ManifoldModel::circle();
        let spec = BridgeSpec::new(m, Point::new(&[0.3]), Point::new(&[2.5]), 1.0).unwrap();
        let grid = TimeGrid::from_times(vec![0.0, 0.4, 1.0]).unwrap();
        let ctl = SeriesControl::default();
        let r = crate::heatkernel::semigroup_apply(
            &m,
            1.0,
            |_| 1.0,
            &m.origin(),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-10);
        let g = crate::quadrature::GaussLegendre::g20();
        let total = crate::quadrature::composite(g, 0.0, TAU, 64, |a| {
            fdd_log_density(&spec, &grid, &[Point::new(&[a.min(TAU - 1e-16)])], &ctl).unwrap().exp()
        });
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn reversal_is_an_involution() {
        let m = ManifoldModel::circle();
        let spec = BridgeSpec::new(m, Point::new(&[0.3]), Point::new(&[2.5]), 1.0).unwrap();
        let grid = TimeGrid::from_times(vec![0.0, 0.4, 0.7, 1.0]).unwrap();
        let path = BridgePath {
            spec: spec.clone(),
            grid,
            points: vec![spec.x.clone(), Point::new(&[1.0]), Point::new(&[2.0]), spec.y.clone()],
            stream_id: 17,
            terminal_snap: true,
            capped_steps: 0,
            stability_warning: false,
        };
        let r = reverse_path(&path);
        assert_eq!(r.points[0], spec.y);
        assert_eq!(r.points[3], spec.x);
        assert_eq!(r.spec.x, spec.y);
        assert_eq!(reverse_path(&r), path);
    }

    #[test]
    fn functionals() {
        let m = ManifoldModel::circle();
        let pts = vec![Point::new(&[0.0]), Point::new(&[PI / 3.0])];
        assert_eq!(Functional::One.eval(&m, &pts), 1.0);
        assert_relative_eq!(Functional::Cos { index: 1 }.eval(&m, &pts), 0.5, max_relative = 1e-15);
        assert_eq!(Functional::Cos { index: 3 }.shifted(2).unwrap(), Functional::Cos { index: 1 });
        assert!(Functional::Cos { index: 1 }.shifted(2).is_err());
    }
}
