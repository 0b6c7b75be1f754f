//! Horizontal lifts of paths to the orthonormal frame bundle.
//!
//! A frame is moved along each geodesic segment between consecutive path
//! points by the model's closed-form Levi-Civita parallel transport. Frames
//! are re-orthonormalized by polar projection whenever their Gram defect
//! exceeds [`PROJECTION_THRESHOLD`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bridge::BridgePath;
use crate::error::{Error, Result};
use crate::geometry::{dot, lorentz, Coords, ManifoldModel, ModelKind, Point};

pub const PROJECTION_THRESHOLD: f64 = 1e-9;
const FRAME_TOL: f64 = 1e-10;

/// An orthonormal frame: `model.dim` ambient tangent vectors at `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub base: Point,
    pub vectors: Vec<Coords>,
}

impl Frame {
    pub fn new(model: &ManifoldModel, base: Point, vectors: Vec<Coords>) -> Result<Self> {
        model.validate(&base)?;
        if vectors.len() != model.dim || vectors.iter().any(|v| v.len() != model.chart_len()) {
            return Err(Error::Precondition(format!("a frame on {} needs {} vectors of length {}", model.name(), model.dim, model.chart_len())));
        }
        let f = Frame { base, vectors };
        let tangency = f.vectors.iter().map(|v| normal_part(model, &f.base, v)).fold(0.0, f64::max);
        let d = f.gram_defect(model).max(tangency);
        if d > FRAME_TOL {
            return Err(Error::Precondition(format!("frame is not orthonormal (defect {d:e})")));
        }
        Ok(f)
    }

    /// The model's canonical frame at `p`.
    pub fn canonical(model: &ManifoldModel, p: &Point) -> Self {
        Frame { base: p.clone(), vectors: model.frame(p).into_iter().collect() }
    }

    pub fn gram(&self, model: &ManifoldModel) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|a| self.vectors.iter().map(|b| model.inner(a, b)).collect()).collect()
    }

    /// Max-entry norm of `Gram - I`.
    pub fn gram_defect(&self, model: &ManifoldModel) -> f64 {
        let g = self.gram(model);
        let mut d: f64 = 0.0;
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                d = d.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        d
    }

    /// Frame vectors as rows, flattened row-major.
    pub fn entries(&self) -> Vec<f64> {
        self.vectors.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

fn normal_part(model: &ManifoldModel, p: &Point, v: &[f64]) -> f64 {
    match model.kind {
        ModelKind::SphereS2 => dot(&p.coords, v).abs(),
        ModelKind::HyperbolicH3 => lorentz(&p.coords, v).abs(),
        _ => 0.0,
    }
}

/// Nearest orthonormal frame at `p` (polar factor of the component matrix).
fn polar_project(model: &ManifoldModel, p: &Point, vectors: &[Coords]) -> Vec<Coords> {
    let m = model.dim;
    let comps: Vec<Coords> = vectors.iter().map(|v| model.to_components(p, v)).collect();
    let a = DMatrix::from_fn(m, m, |i, j| comps[j][i]);
    let svd = a.svd(true, true);
    let w = svd.u.unwrap() * svd.v_t.unwrap();
    (0..m).map(|j| model.to_ambient(p, &w.column(j).iter().copied().collect::<Vec<_>>())).collect()
}

fn transport_segment(model: &ManifoldModel, p: &Point, q: &Point, vectors: &[Coords]) -> Result<Vec<Coords>> {
    if model.kind == ModelKind::SphereS2 && 1.0 + dot(&p.coords, &q.coords) < 1e-8 {
        return Err(Error::Domain("parallel transport between (nearly) antipodal points".into()));
    }
    Ok(vectors.iter().map(|w| model.transport(p, q, w)).collect())
}

/// Parallel transport of arbitrary ambient tangent vectors along a
/// piecewise-geodesic path; one set of vectors per path point.
pub fn transport_along(model: &ManifoldModel, points: &[Point], vectors: &[Coords]) -> Result<Vec<Vec<Coords>>> {
    let mut out = Vec::with_capacity(points.len());
    let mut cur: Vec<Coords> = vectors.to_vec();
    out.push(cur.clone());
    for w in points.windows(2) {
        cur = transport_segment(model, &w[0], &w[1], &cur)?;
        out.push(cur.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftPath {
    pub base_path: BridgePath,
    pub frames: Vec<Frame>,
    /// Largest Gram defect seen before any projection.
    pub orthonormality_defect: f64,
    /// Largest Gram defect of the returned frames.
    pub final_defect: f64,
    pub projections: usize,
}

fn lift_points(model: &ManifoldModel, points: &[Point], u0: &Frame) -> Result<(Vec<Frame>, f64, f64, usize)> {
    if points.first() != Some(&u0.base) {
        return Err(Error::Precondition("initial frame must sit at the first path point".into()));
    }
    let mut frames = Vec::with_capacity(points.len());
    frames.push(u0.clone());
    let (mut pre, mut post, mut projections) = (u0.gram_defect(model), u0.gram_defect(model), 0usize);
    for w in points.windows(2) {
        let prev = frames.last().unwrap();
        let mut f = Frame { base: w[1].clone(), vectors: transport_segment(model, &w[0], &w[1], &prev.vectors)? };
        let d = f.gram_defect(model);
        pre = pre.max(d);
        if d > PROJECTION_THRESHOLD {
            f.vectors = polar_project(model, &f.base, &f.vectors);
            projections += 1;
        }
        post = post.max(f.gram_defect(model));
        frames.push(f);
    }
    Ok((frames, pre, post, projections))
}

/// Horizontal lift of a path started from the frame `u0` at `path.points[0]`.
/// Frame `j` sits exactly at `path.points[j]`.
pub fn horizontal_lift(path: &BridgePath, u0: &Frame) -> Result<LiftPath> {
    let (frames, pre, post, projections) = lift_points(&path.spec.model, &path.points, u0)?;
    Ok(LiftPath { base_path: path.clone(), frames, orthonormality_defect: pre, final_defect: post, projections })
}

/// Holonomy of a closed piecewise-geodesic loop: `H[i][j] = ⟨u0_i, U_j⟩` with
/// `U` the frame transported once around the loop. For a loop bounding a
/// region counterclockwise with respect to `(u0_1, u0_2)`, `H` rotates by the
/// enclosed curvature integral: `U_1 = cos a · u0_1 + sin a · u0_2`.
pub fn holonomy(model: &ManifoldModel, points: &[Point], u0: &Frame) -> Result<Vec<Vec<f64>>> {
    let (first, last) = match (points.first(), points.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Precondition("empty loop".into())),
    };
    if model.distance(first, last) > 1e-12 {
        return Err(Error::Precondition("holonomy needs a closed path".into()));
    }
    let (frames, _, _, _) = lift_points(model, points, u0)?;
    let end = frames.last().unwrap();
    // the last point may differ from the first by rounding; move back onto u0's base
    let back = transport_segment(model, last, first, &end.vectors)?;
    Ok(u0.vectors.iter().map(|a| back.iter().map(|b| model.inner(a, b)).collect()).collect())
}

/// Rotation angle of an orthogonal matrix of size 2 or 3 (for size 2 the
/// signed angle; for size 3 the unsigned one).
pub fn rotation_angle(h: &[Vec<f64>]) -> f64 {
    match h.len() {
        1 => {
            if h[0][0] > 0.0 {
                0.0
            } else {
                std::f64::consts::PI
            }
        }
        2 => h[1][0].atan2(h[0][0]),
        _ => {
            let tr: f64 = (0..h.len()).map(|i| h[i][i]).sum();
            ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{sample_bridge_sde, BridgeSpec, TimeGrid};
    use crate::rng::RngStream;
    use std::f64::consts::PI;

    /// Geodesic polygon through `corners`, each side cut into `k` pieces.
    fn polygon(model: &ManifoldModel, corners: &[Point], k: usize) -> Vec<Point> {
        let mut pts = vec![corners[0].clone()];
        for w in corners.windows(2) {
            let v = model.log_ambient(&w[0], &w[1]);
            for i in 1..=k {
                let s = i as f64 / k as f64;
                pts.push(if i == k { w[1].clone() } else { model.exp_ambient(&w[0], &v.iter().map(|x| s * x).collect::<Coords>()) });
            }
        }
        pts
    }

    #[test]
    fn sphere_octant_rotates_by_a_right_angle() {
        let m = ManifoldModel::sphere2();
        let n = Point::new(&[0.0, 0.0, 1.0]);
        let corners = [n.clone(), Point::new(&[1.0, 0.0, 0.0]), Point::new(&[0.0, 1.0, 0.0]), n.clone()];
        for k in [1, 7, 100] {
            let h = holonomy(&m, &polygon(&m, &corners, k), &Frame::canonical(&m, &n)).unwrap();
            let a = rotation_angle(&h);
            assert!((a.abs() - PI / 2.0).abs() < 1e-6, "k={k}: {a}");
            // counterclockwise seen from outside → positive rotation
            assert!((a - PI / 2.0).abs() < 1e-6, "k={k}: {a}");
        }
    }

    #[test]
    fn h3_triangle_rotates_by_the_angle_defect() {
        let m = ManifoldModel::hyperbolic3();
        let o = m.origin();
        let r = 1.2;
        let a = m.exp_ambient(&o, &m.to_ambient(&o, &[r, 0.0, 0.0]));
        let b = m.exp_ambient(&o, &m.to_ambient(&o, &[0.0, r, 0.0]));
        let angle = |p: &Point, q: &Point, s: &Point| {
            let (u, v) = (m.log_ambient(p, q), m.log_ambient(p, s));
            (m.inner(&u, &v) / (m.vec_norm(&u) * m.vec_norm(&v))).clamp(-1.0, 1.0).acos()
        };
        let defect = PI - angle(&o, &a, &b) - angle(&a, &b, &o) - angle(&b, &o, &a);
        assert!(defect > 0.1);
        let h = holonomy(&m, &polygon(&m, &[o.clone(), a, b, o.clone()], 20), &Frame::canonical(&m, &o)).unwrap();
        assert!((rotation_angle(&h) - defect).abs() < 1e-9, "{} vs {defect}", rotation_angle(&h));
        // the rotation is about the normal of the triangle's plane (third axis)
        assert!((h[2][2] - 1.0).abs() < 1e-12);
        // negative curvature turns the frame clockwise
        assert!(h[1][0] < 0.0);
    }

    #[test]
    fn flat_loops_have_trivial_holonomy() {
        let m = ManifoldModel::euclidean(2).unwrap();
        let pts = polygon(&m, &[m.origin(), Point::new(&[1.0, 0.0]), Point::new(&[0.3, 2.0]), m.origin()], 5);
        let h = holonomy(&m, &pts, &Frame::canonical(&m, &m.origin())).unwrap();
        assert_eq!(h, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let open = &pts[..pts.len() - 1];
        assert!(holonomy(&m, open, &Frame::canonical(&m, &m.origin())).is_err());
    }

    #[test]
    fn bridge_lifts_project_and_repeat_bitwise() {
        for m in [ManifoldModel::euclidean(2).unwrap(), ManifoldModel::circle(), ManifoldModel::sphere2(), ManifoldModel::hyperbolic3()] {
            let y = m.exp_ambient(&m.origin(), &m.to_ambient(&m.origin(), &vec![0.7; m.dim]));
            let spec = BridgeSpec::new(m, m.origin(), y, 1.0).unwrap();
            let path = sample_bridge_sde(&spec, &TimeGrid::uniform(1.0, 1000).unwrap(), &mut RngStream::new(3, "lift", 0)).unwrap();
            let u0 = Frame::canonical(&m, &m.origin());
            let a = horizontal_lift(&path, &u0).unwrap();
            let b = horizontal_lift(&path, &u0).unwrap();
            assert_eq!(a, b);
            assert!(a.orthonormality_defect < 1e-3);
            assert!(a.final_defect < 1e-10);
            for (f, p) in a.frames.iter().zip(&path.points) {
                assert_eq!(&f.base, p);
            }
            if matches!(m.kind, ModelKind::EuclideanR(_) | ModelKind::CircleS1) {
                assert!(a.frames.iter().all(|f| f.vectors == u0.vectors));
                assert_eq!(a.orthonormality_defect, 0.0);
            }
        }
    }

    #[test]
    fn transport_preserves_inner_products() {
        let m = ManifoldModel::sphere2();
        let pts = polygon(&m, &[m.origin(), Point::new(&[0.6, 0.8, 0.0]), Point::new(&[0.0, -0.6, 0.8])], 50);
        let f = m.frame(&m.origin());
        let (v, w): (Coords, Coords) = (f[0].iter().map(|x| 2.0 * x).collect(), f[0].iter().zip(f[1].iter()).map(|(a, b)| 0.3 * a - 1.1 * b).collect());
        let ip0 = m.inner(&v, &w);
        for vs in transport_along(&m, &pts, &[v, w]).unwrap() {
            assert!((m.inner(&vs[0], &vs[1]) - ip0).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_paths_keep_frames_orthonormal() {
        // defect per unit length at dt = 1e-4 along a smooth curve
        let m = ManifoldModel::sphere2();
        let pts: Vec<Point> = (0..=10_000)
            .map(|i| {
                let s = i as f64 * 1e-4;
                let th = 0.5 + 0.4 * (3.0 * s).sin();
                Point::new(&[th.sin() * (2.0 * s).cos(), th.sin() * (2.0 * s).sin(), th.cos()])
            })
            .collect();
        let u0 = Frame::canonical(&m, &pts[0]);
        let (_, pre, _, _) = lift_points(&m, &pts, &u0).unwrap();
        let length: f64 = pts.windows(2).map(|w| m.distance(&w[0], &w[1])).sum();
        assert!(pre / length < 1e-8, "{pre}");
    }

    #[test]
    fn base_mismatch_is_rejected() {
        let m = ManifoldModel::sphere2();
        let spec = BridgeSpec::new(m, m.origin(), Point::new(&[1.0, 0.0, 0.0]), 1.0).unwrap();
        let path = sample_bridge_sde(&spec, &TimeGrid::uniform(1.0, 10).unwrap(), &mut RngStream::new(0, "x", 0)).unwrap();
        let u0 = Frame::canonical(&m, &Point::new(&[1.0, 0.0, 0.0]));
        assert!(matches!(horizontal_lift(&path, &u0), Err(Error::Precondition(_))));
        assert!(Frame::new(&m, m.origin(), vec![smallvec::smallvec![1.0, 0.0, 0.0], smallvec::smallvec![1.0, 0.0, 0.0]]).is_err());
    }
}
