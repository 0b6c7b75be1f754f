//! Guided SDE sampler: geodesic Euler–Maruyama for
//! `dX = ∇ log p(T - t, X, y) dt + dW`.

use serde::{Deserialize, Serialize};
use smallvec::smallvec;

use super::{check_grid_matches, BridgePath, BridgeSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::Coords;
use crate::heatkernel::{bridge_drift, SeriesControl};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeOptions {
    pub series: SeriesControl,
    /// Fraction of capped steps above which the path carries a warning.
    pub cap_warning_fraction: f64,
}

impl Default for SdeOptions {
    fn default() -> Self {
        Self { series: SeriesControl::default(), cap_warning_fraction: 0.05 }
    }
}

const MIN_STEPS: usize = 8;

fn check_uniform(spec: &BridgeSpec, grid: &TimeGrid) -> Result<f64> {
    check_grid_matches(spec, grid)?;
    let dt = grid.uniform_dt().ok_or_else(|| Error::Grid("the SDE sampler needs a uniform grid".into()))?;
    if grid.steps() < MIN_STEPS {
        return Err(Error::Grid(format!("the SDE sampler needs at least {MIN_STEPS} steps, got {}", grid.steps())));
    }
    Ok(dt)
}

/// Integrates one path; `noise(j)` returns the frame components of `ΔW_j`.
fn integrate<F: FnMut(usize) -> Coords>(
    spec: &BridgeSpec,
    grid: &TimeGrid,
    dt: f64,
    stream_id: u64,
    opts: &SdeOptions,
    mut noise: F,
) -> Result<(BridgePath, Vec<Coords>)> {
    let m = &spec.model;
    let n = grid.steps();
    let cap = 0.5 * m.injectivity_radius();
    let mut points = Vec::with_capacity(n + 1);
    let mut drifts = Vec::with_capacity(n);
    let mut capped = 0usize;
    points.push(spec.x.clone());
    for j in 0..n {
        let xj = &points[j];
        let (g, _) = bridge_drift(m, grid.remaining()[j], xj, &spec.y, &opts.series)?;
        let w = noise(j);
        if j + 1 < n {
            let mut scale = dt;
            let len = m.vec_norm(&g) * dt;
            if len > cap {
                scale *= cap / len;
                capped += 1;
            }
            let dw = m.to_ambient(xj, &w);
            let v: Coords = g.iter().zip(dw.iter()).map(|(gi, wi)| scale * gi + wi).collect();
            let v = m.project_tangent(xj, &v);
            let next = m.exp_ambient(xj, &v);
            drifts.push(g);
            points.push(next);
        } else {
            drifts.push(g);
            points.push(spec.y.clone());
        }
    }
    Ok((
        BridgePath {
            spec: spec.clone(),
            grid: grid.clone(),
            points,
            stream_id,
            terminal_snap: true,
            capped_steps: capped,
            stability_warning: capped as f64 > opts.cap_warning_fraction * n as f64,
        },
        drifts,
    ))
}

/// One path from the guided SDE sampler, together with the uncapped drift
/// `∇ log p(T - t_j, X_j, y)` (ambient) at each `j < N`.
pub fn sample_bridge_sde_with_drifts(
    spec: &BridgeSpec,
    grid: &TimeGrid,
    stream: &mut RngStream,
    opts: &SdeOptions,
) -> Result<(BridgePath, Vec<Coords>)> {
    let dt = check_uniform(spec, grid)?;
    let sd = dt.sqrt();
    let dim = spec.model.dim;
    let id = stream.id();
    integrate(spec, grid, dt, id, opts, |_| (0..dim).map(|_| sd * stream.normal()).collect())
}

/// One path from the guided SDE sampler with default options.
pub fn sample_bridge_sde(spec: &BridgeSpec, grid: &TimeGrid, stream: &mut RngStream) -> Result<BridgePath> {
    Ok(sample_bridge_sde_with_drifts(spec, grid, stream, &SdeOptions::default())?.0)
}

/// Paths on `fine_steps`, `fine_steps/2`, ... (`levels` grids) driven by the
/// same Brownian increments: each coarse increment is the sum of the fine
/// increments it covers. Index 0 is the finest level.
pub fn sample_bridge_sde_coupled(
    spec: &BridgeSpec,
    fine_steps: usize,
    levels: usize,
    stream: &mut RngStream,
    opts: &SdeOptions,
) -> Result<Vec<(BridgePath, Vec<Coords>)>> {
    if levels == 0 || fine_steps % (1 << (levels - 1)) != 0 {
        return Err(Error::Grid(format!("{fine_steps} steps cannot be halved {} times", levels.saturating_sub(1))));
    }
    let dim = spec.model.dim;
    let sd = (spec.horizon / fine_steps as f64).sqrt();
    let fine: Vec<Coords> = (0..fine_steps).map(|_| (0..dim).map(|_| sd * stream.normal()).collect()).collect();
    let id = stream.id();
    (0..levels)
        .map(|l| {
            let k = 1 << l;
            let grid = TimeGrid::uniform(spec.horizon, fine_steps / k)?;
            let dt = check_uniform(spec, &grid)?;
            integrate(spec, &grid, dt, id, opts, |j| {
                let mut w: Coords = smallvec![0.0; dim];
                for f in &fine[j * k..(j + 1) * k] {
                    for (wi, fi) in w.iter_mut().zip(f.iter()) {
                        *wi += fi;
                    }
                }
                w
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ManifoldModel, Point};
    use crate::heatkernel::log_kernel_gradient;
    use crate::stats::Moments;

    #[test]
    fn euclidean_drift_is_exact() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let ctl = SeriesControl::default();
        for (t, z) in [(0.0, 0.0), (0.3, -0.4), (0.9, 2.0)] {
            let g = log_kernel_gradient(&m, 1.0 - t, &Point::new(&[z]), &Point::new(&[1.0]), &ctl).unwrap();
            assert!((g.components[0] - (1.0 - z) / (1.0 - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn sde_pins_both_ends_on_all_models() {
        for m in [ManifoldModel::euclidean(2).unwrap(), ManifoldModel::circle(), ManifoldModel::sphere2(), ManifoldModel::hyperbolic3()] {
            let y = m.exp_ambient(&m.origin(), &m.to_ambient(&m.origin(), &vec![0.5; m.dim]));
            let spec = BridgeSpec::new(m, m.origin(), y.clone(), 1.0).unwrap();
            let grid = TimeGrid::uniform(1.0, 100).unwrap();
            let p = sample_bridge_sde(&spec, &grid, &mut RngStream::new(2, "sde", 0)).unwrap();
            assert_eq!(p.points[0], spec.x);
            assert_eq!(p.points[100], y);
            for q in &p.points {
                m.validate(q).unwrap();
            }
            assert!(!p.stability_warning);
        }
    }

    #[test]
    fn needs_uniform_grid_with_enough_steps() {
        let m = ManifoldModel::circle();
        let spec = BridgeSpec::new(m, m.origin(), Point::new(&[1.0]), 1.0).unwrap();
        let mut s = RngStream::new(0, "x", 0);
        assert!(sample_bridge_sde(&spec, &TimeGrid::uniform(1.0, 4).unwrap(), &mut s).is_err());
        assert!(sample_bridge_sde(&spec, &TimeGrid::from_times((0..=10).map(|i| i as f64 / 10.0).collect()).unwrap(), &mut s).is_err());
    }

    #[test]
    fn coupled_levels_share_noise() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), Point::new(&[0.5]), 1.0).unwrap();
        let paths = sample_bridge_sde_coupled(&spec, 64, 3, &mut RngStream::new(8, "cpl", 0), &SdeOptions::default()).unwrap();
        assert_eq!(paths.len(), 3);
        assert_eq!(paths[1].0.grid.steps(), 32);
        // coarse and fine paths stay close when they share the driving noise
        let (fine, coarse) = (&paths[0].0, &paths[1].0);
        let gap = (1..32).map(|j| (fine.points[2 * j].coords[0] - coarse.points[j].coords[0]).abs()).fold(0.0, f64::max);
        assert!(gap < 0.5, "{gap}");
    }

    #[test]
    fn terminal_distance_shrinks_with_step() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), Point::new(&[1.0]), 1.0).unwrap();
        let mean_gap = |n: usize| {
            let grid = TimeGrid::uniform(1.0, n).unwrap();
            let mut mom = Moments::default();
            for i in 0..4000 {
                let p = sample_bridge_sde(&spec, &grid, &mut RngStream::new(6, "gap", i)).unwrap();
                mom.push(m.distance(&p.points[n - 1], &spec.y));
            }
            mom.mean()
        };
        let r = mean_gap(200) / mean_gap(100);
        assert!((0.55..=0.90).contains(&r), "{r}");
    }
}
